import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evfilter import (
    CycleInput,
    Event,
    EventStream,
    FilterParams,
    GlobalUpdate,
    ParamError,
    PipelineConfig,
    PipelineSimulator,
    SaturationError,
    StreamError,
    blocked_cycles_per_update,
    effective_throughput,
    filter_stream,
    global_update_sequence,
    run_events,
    run_trace,
)
from evfilter.pipeline import PHASE_IDLE, TRACE_HEADER

from conftest import random_stream


def packet_params(width=64, height=48, scale=16, filter_length_us=300):
    return FilterParams(width, height, scale=scale,
                        filter_length_us=filter_length_us,
                        global_update=GlobalUpdate.per_packet())


class TestConfig:
    def test_forward_depth_must_cover_latency(self):
        with pytest.raises(ParamError):
            PipelineConfig(params=packet_params(), mem_read_latency=3,
                           forward_depth=3)

    def test_time_policy_rejected(self):
        params = FilterParams(64, 64, global_update=GlobalUpdate.by_time(1000))
        with pytest.raises(ParamError):
            PipelineConfig(params=params)

    def test_latency(self):
        assert PipelineConfig(params=packet_params()).latency == 3


class TestSingleEvent:
    def test_decision_and_latency(self):
        params = FilterParams(64, 64, filter_length_us=100)
        config = PipelineConfig(params=params)
        sim = PipelineSimulator(config)
        outputs = []
        tready, out = sim.step(CycleInput(True, Event(ts=0, x=5, y=7), False, True))
        assert tready and out is None
        for _ in range(5):
            _, out = sim.step(CycleInput.idle())
            if out is not None:
                outputs.append(out)
        assert len(outputs) == 1
        beat = outputs[0]
        assert beat.cycle == 3  # cell compute + 2-cycle read + verify
        reference = filter_stream(
            EventStream(width=64, height=64, ts=[0], x=[5], y=[7], polarity=[1]),
            params,
        )
        assert beat.correct == bool(reference.passed[0])

    def test_consecutive_same_cell_uses_forwarding(self):
        params = FilterParams(64, 64, scale=16, filter_length_us=100)
        config = PipelineConfig(params=params)
        sim = PipelineSimulator(config, trace=True)
        events = [Event(ts=t, x=1, y=1) for t in (10, 11)]
        inputs = [CycleInput(True, e, False, True) for e in events]
        inputs += [CycleInput.idle() for _ in range(6)]
        outputs, final_map, trace = run_trace(sim, inputs)
        assert [o.index for o in outputs] == [0, 1]
        accepts = [r for r in trace.records if r.accepted >= 0]
        assert accepts[0].fwd_slot == 0 and accepts[0].mem_read >= 0
        assert accepts[1].fwd_slot == 1 and accepts[1].mem_read == -1
        stream = EventStream(width=64, height=64, ts=[10, 11], x=[1, 1],
                             y=[1, 1], polarity=[1, 1])
        assert final_map.equals(filter_stream(stream, params).map)


class TestRunTrace:
    def test_hold_rule_violation_raises(self):
        config = PipelineConfig(params=packet_params())
        sim = PipelineSimulator(config)
        e1 = Event(ts=0, x=0, y=0)
        e2 = Event(ts=1, x=2, y=2)
        inputs = [
            CycleInput(True, e1, False, False),  # stalled, must hold
            CycleInput(True, e2, False, True),   # swapped the data: illegal
        ]
        with pytest.raises(StreamError):
            run_trace(sim, inputs)

    def test_tvalid_without_tdata_rejected(self):
        sim = PipelineSimulator(PipelineConfig(params=packet_params()))
        with pytest.raises(StreamError):
            run_trace(sim, [CycleInput(True, None, False, True)])

    def test_empty_input(self):
        sim = PipelineSimulator(PipelineConfig(params=packet_params()))
        outputs, final_map, _ = run_trace(sim, [])
        assert outputs == []
        assert (final_map.states == 0).all()


class TestEquivalence:
    @pytest.mark.parametrize("duty,seed,packet", [
        (1.0, 0, 0),
        (0.6, 3, 700),
        (0.3, 9, 150),
    ])
    def test_matches_functional_filter(self, duty, seed, packet):
        stream = random_stream(seed + 100, 4000, same_cell_run=5,
                               packet_every=packet)
        gu = GlobalUpdate.per_packet() if packet else GlobalUpdate.disabled()
        params = FilterParams(64, 48, scale=8, filter_length_us=250,
                              global_update=gu)
        config = PipelineConfig(params=params)
        rng = np.random.default_rng(seed)
        gaps = rng.integers(0, 3, len(stream))
        run = run_events(config, stream, ready_duty=duty, ready_seed=seed,
                         gaps=gaps)
        ref = filter_stream(stream, params)
        assert np.array_equal(run.passed, ref.passed)
        assert np.array_equal(run.diff_ts, ref.diff_ts)
        assert run.map.equals(ref.map)
        assert run.updates == ref.updates

    def test_kernel_matches_step_model(self):
        stream = random_stream(77, 1500, same_cell_run=6, packet_every=400)
        config = PipelineConfig(params=packet_params(scale=8))
        rng = np.random.default_rng(5)
        gaps = rng.integers(0, 4, len(stream))
        fast = run_events(config, stream, ready_duty=0.5, ready_seed=2,
                          gaps=gaps, use_kernel=True)
        slow = run_events(config, stream, ready_duty=0.5, ready_seed=2,
                          gaps=gaps, use_kernel=False)
        assert np.array_equal(fast.passed, slow.passed)
        assert np.array_equal(fast.out_cycles, slow.out_cycles)
        assert fast.cycles == slow.cycles
        assert fast.blocked_cycles == slow.blocked_cycles
        assert fast.map.equals(slow.map)

    def test_single_cell_saturation_forwards_everything(self):
        n = 50
        stream = EventStream(width=64, height=48,
                             ts=np.arange(n), x=np.full(n, 3),
                             y=np.full(n, 3), polarity=np.ones(n))
        config = PipelineConfig(params=packet_params())
        run = run_events(config, stream, trace=True, use_kernel=False)
        accepts = [r for r in run.trace.records if r.accepted >= 0]
        assert all(r.fwd_slot == 1 for r in accepts[1:])
        assert all(r.mem_read == -1 for r in accepts[1:])
        params = packet_params()
        assert run.map.equals(filter_stream(stream, params).map)


class TestTiming:
    def test_initiation_interval_one(self):
        n = 200
        stream = random_stream(1, n)
        config = PipelineConfig(params=packet_params(scale=8))
        run = run_events(config, stream)
        assert np.array_equal(run.out_cycles, np.arange(n) + config.latency)
        assert run.cycles == n + config.latency
        assert run.blocked_cycles == 0

    def test_stall_transparency(self):
        stream = random_stream(8, 1200, same_cell_run=4, packet_every=500)
        config = PipelineConfig(params=packet_params(scale=8))
        base = run_events(config, stream)
        for duty, seed in [(0.9, 1), (0.5, 2), (0.2, 3)]:
            stalled = run_events(config, stream, ready_duty=duty,
                                 ready_seed=seed)
            assert np.array_equal(stalled.passed, base.passed)
            assert stalled.map.equals(base.map)
            assert stalled.cycles > base.cycles

    def test_ten_cycle_downstream_hold_loses_nothing(self):
        stream = random_stream(30, 30, width=32, height=32)
        params = FilterParams(32, 32, scale=8, filter_length_us=250)
        config = PipelineConfig(params=params)
        baseline = run_events(config, stream)

        sim = PipelineSimulator(config)
        outputs = []
        next_event = 0
        cycle = 0
        while len(outputs) < len(stream):
            dready = not (10 <= cycle < 20)
            if next_event < len(stream):
                e = stream.event(next_event)
                inp = CycleInput(True, e, e.packet_last, dready)
            else:
                inp = CycleInput.idle(dready)
            tready, out = sim.step(inp)
            if inp.tvalid and tready:
                next_event += 1
            if out is not None:
                outputs.append(out)
            cycle += 1
        assert [o.correct for o in outputs] == baseline.passed.tolist()
        assert [o.index for o in outputs] == list(range(len(stream)))
        assert sim.map.equals(baseline.map)
        assert cycle == baseline.cycles + 10

    def test_conservation_and_order(self):
        stream = random_stream(21, 800, packet_every=333)
        config = PipelineConfig(params=packet_params(scale=8))
        run = run_events(config, stream, ready_duty=0.4, ready_seed=7)
        assert (run.out_cycles >= 0).all()
        assert (np.diff(run.out_cycles) > 0).all()

    def test_collision_freedom(self):
        stream = random_stream(13, 600, same_cell_run=8, packet_every=200)
        config = PipelineConfig(params=packet_params(scale=8))
        run = run_events(config, stream, ready_duty=0.7, ready_seed=4,
                         trace=True, use_kernel=False)
        for rec in run.trace.records:
            if rec.phase == PHASE_IDLE and rec.mem_read >= 0 and rec.mem_write:
                assert rec.mem_read != rec.mem_write[0]


class TestGlobalUpdateSequence:
    def test_blocked_cycles_vga_grid(self):
        params = FilterParams(640, 480, scale=16,
                              global_update=GlobalUpdate.per_packet())
        config = PipelineConfig(params=params)
        sim = PipelineSimulator(config)
        assert global_update_sequence(sim) == 1206
        assert blocked_cycles_per_update(config) == 1206

    def test_all_active_grid_unchanged(self):
        params = FilterParams(32, 32, scale=16,
                              global_update=GlobalUpdate.per_packet())
        config = PipelineConfig(params=params)
        sim = PipelineSimulator(config)
        events = [Event(ts=t, x=x, y=y)
                  for t, (x, y) in enumerate([(0, 0), (16, 0), (0, 16), (16, 16)])]
        for e in events:
            sim.step(CycleInput(True, e, False, True))
        while not sim.idle_and_ready():
            sim.step(CycleInput.idle())
        states_before = sim.map.states.copy()
        assert sim.map.active.all()
        blocked = global_update_sequence(sim)
        assert blocked == 3 + 4 + 3
        assert np.array_equal(sim.map.states, states_before)
        assert not sim.map.active.any()

    def test_zero_drain_config(self):
        params = FilterParams(32, 32, scale=16,
                              global_update=GlobalUpdate.per_packet())
        config = PipelineConfig(params=params, post_tlast_drain=0,
                                post_update_drain=0)
        sim = PipelineSimulator(config)
        assert global_update_sequence(sim) == blocked_cycles_per_update(config) == 4
        stream = random_stream(4, 60, width=32, height=32, packet_every=20)
        fast = run_events(config, stream, ready_duty=0.6, ready_seed=1)
        slow = run_events(config, stream, ready_duty=0.6, ready_seed=1,
                          use_kernel=False)
        assert fast.cycles == slow.cycles
        assert fast.blocked_cycles == slow.blocked_cycles
        assert np.array_equal(fast.passed, slow.passed)

    def test_grid_iteration_matches_ceiling_division(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            width = int(rng.integers(17, 400))
            height = int(rng.integers(17, 300))
            scale = int(rng.choice([4, 8, 16, 32]))
            params = FilterParams(width, height, scale=scale,
                                  global_update=GlobalUpdate.per_packet())
            config = PipelineConfig(params=params)
            cells = (-(-width // scale)) * (-(-height // scale))
            sim = PipelineSimulator(config)
            assert global_update_sequence(sim) == 3 + cells + 3

    def test_packet_boundary_triggers_block(self):
        stream = random_stream(2, 50, width=32, height=32, packet_every=25)
        config = PipelineConfig(params=packet_params(width=32, height=32))
        run = run_events(config, stream)
        per_update = blocked_cycles_per_update(config)
        assert run.updates == 2
        assert run.blocked_cycles == 2 * per_update


class TestThroughputModel:
    @pytest.mark.parametrize("w,h,clock,period,target", [
        (640, 480, 387e6, 1000, 385.8e6),
        (640, 480, 387e6, 10000, 386.9e6),
        (1280, 720, 361.5e6, 1000, 357.9e6),
        (1280, 720, 361.5e6, 10000, 361.1e6),
    ])
    def test_reference_points(self, w, h, clock, period, target):
        config = PipelineConfig(params=FilterParams(w, h, scale=16))
        rate = effective_throughput(config, clock, period)
        assert abs(rate - target) / target < 0.005

    def test_saturation(self):
        config = PipelineConfig(params=FilterParams(1280, 720, scale=16))
        with pytest.raises(SaturationError):
            effective_throughput(config, 387e6, 5)


class TestTraceExport:
    def test_format(self, tmp_path):
        stream = random_stream(5, 10)
        config = PipelineConfig(params=packet_params(scale=8))
        run = run_events(config, stream, trace=True, use_kernel=False)
        path = tmp_path / "trace.tsv"
        run.trace.write(path)
        lines = path.read_text().splitlines()
        assert lines[0] == TRACE_HEADER
        assert len(lines) == 1 + run.cycles
        n_fields = len(TRACE_HEADER.split("\t"))
        assert all(len(line.split("\t")) == n_fields for line in lines[1:])


class TestProperties:
    @given(st.integers(0, 2**32), st.integers(0, 40), st.integers(1, 10))
    @settings(max_examples=150)
    def test_stall_transparency_property(self, seed, n, duty_decile):
        stream = random_stream(seed, n, same_cell_run=3, packet_every=17)
        config = PipelineConfig(params=packet_params(scale=8))
        a = run_events(config, stream)
        b = run_events(config, stream, ready_duty=duty_decile / 10.0,
                       ready_seed=seed)
        assert np.array_equal(a.passed, b.passed)
        assert a.map.equals(b.map)

    @given(st.integers(0, 2**32), st.integers(0, 40))
    @settings(max_examples=150)
    def test_conservation_property(self, seed, n):
        stream = random_stream(seed, n, packet_every=13)
        config = PipelineConfig(params=packet_params(scale=8))
        run = run_events(config, stream)
        assert len(run.passed) == n
        assert (run.out_cycles >= 0).all()
