"""Cycle-level behavioral model of the streaming filter pipeline.

Models a ready/valid event stream flowing through: area-address compute,
a state-memory read with registered output (``mem_read_latency`` cycles),
a forwarding stage that recodes the state for events whose area matches one
of the last ``forward_depth`` accepted events (youngest match wins), the
verify/update stage, and the packet-triggered blocking global update.

Filter arithmetic is imported from :mod:`evfilter.filtering`, so decisions
and final state are bit-identical with the functional engine; what this
module adds is timing: occupancy, stalls, memory transactions, blocked
cycles. A stalled downstream (``downstream_tready`` low) freezes every
stage and the memory output register, so stall patterns can change only
timing, never results.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .events import (
    INIT_FIRST_TS,
    Event,
    EventStream,
    FilterParams,
    ParamError,
    StreamError,
    TimeMap,
    validate_stream,
)
from .filtering import iir_update

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    njit = None
    _HAVE_NUMBA = False


PHASE_IDLE = 0
PHASE_DRAIN_IN = 1
PHASE_UPDATE = 2
PHASE_DRAIN_OUT = 3

_PHASE_NAMES = {
    PHASE_IDLE: "idle",
    PHASE_DRAIN_IN: "drain_in",
    PHASE_UPDATE: "update",
    PHASE_DRAIN_OUT: "drain_out",
}


class SaturationError(ValueError):
    """The global update blocks for longer than the update period."""


@dataclass(frozen=True)
class PipelineConfig:
    params: FilterParams
    mem_read_latency: int = 2
    forward_depth: int = 3
    post_tlast_drain: int = 3
    post_update_drain: int = 3

    def __post_init__(self):
        if self.mem_read_latency < 1:
            raise ParamError("mem_read_latency must be >= 1")
        if self.forward_depth < self.mem_read_latency + 1:
            raise ParamError(
                "forward_depth must cover the read latency plus one guard cycle"
            )
        if self.post_tlast_drain < 0 or self.post_update_drain < 0:
            raise ParamError("drain lengths must be >= 0")
        if self.params.global_update.kind not in ("none", "packet"):
            raise ParamError(
                "the pipeline updates on packet boundaries only; use a "
                "'packet' or 'none' global update policy"
            )

    @property
    def latency(self) -> int:
        """Cycles from accept to output with an always-ready downstream."""
        return self.mem_read_latency + 1


def blocked_cycles_per_update(config: PipelineConfig) -> int:
    """Input-blocked cycles of one unstalled global update sequence."""
    p = config.params
    return config.post_tlast_drain + p.cells_x * p.cells_y + config.post_update_drain


def effective_throughput(
    config: PipelineConfig, clock_hz: float, update_period_us: float
) -> float:
    """Sustained events/second with one global update per period.

    The pipeline accepts one event per cycle except while an update blocks
    the input, so the rate is clock * (1 - blocked / cycles_per_period).
    """
    blocked = blocked_cycles_per_update(config)
    period_s = update_period_us * 1e-6
    if blocked / clock_hz >= period_s:
        raise SaturationError(
            f"update blocks {blocked} cycles, longer than the "
            f"{update_period_us} us period at {clock_hz} Hz"
        )
    return clock_hz * (1.0 - blocked / (period_s * clock_hz))


# ---------------------------------------------------------------------------
# Cycle-level simulator (reference, step-driven, optional tracing)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CycleInput:
    """One cycle's bus sample. ``tdata`` is meaningful only when tvalid."""

    tvalid: bool = False
    tdata: Optional[Event] = None
    tlast: bool = False
    downstream_tready: bool = True

    @classmethod
    def idle(cls, downstream_tready: bool = True) -> "CycleInput":
        return cls(False, None, False, downstream_tready)


@dataclass
class CycleRecord:
    cycle: int
    tvalid: bool
    tready: bool
    dready: bool
    accepted: int = -1  # event index accepted this cycle, -1 otherwise
    stages: tuple = ()
    fwd_slot: int = 0  # 1-based slot of the forwarding hit, 0 = none
    mem_read: int = -1  # flat area address, -1 = none
    mem_write: tuple = ()  # (flat addr, value) or ()
    phase: int = PHASE_IDLE
    output: tuple = ()  # (event index, correct) or ()

    def to_tsv(self) -> str:
        stages = "|".join("-" if s is None else str(s) for s in self.stages)
        wr = f"{self.mem_write[0]}:{self.mem_write[1]}" if self.mem_write else "-"
        out = f"{self.output[0]}:{int(self.output[1])}" if self.output else "-"
        return "\t".join(
            [
                str(self.cycle),
                str(int(self.tvalid)),
                str(int(self.tready)),
                str(int(self.dready)),
                "-" if self.accepted < 0 else str(self.accepted),
                stages,
                "-" if self.fwd_slot == 0 else str(self.fwd_slot),
                "-" if self.mem_read < 0 else str(self.mem_read),
                wr,
                _PHASE_NAMES[self.phase],
                out,
            ]
        )


TRACE_HEADER = (
    "# cycle\ttvalid\ttready\tdready\taccept\tstages\tfwd\tmem_rd\tmem_wr\tphase\tout"
)


@dataclass
class PipelineTrace:
    records: list = field(default_factory=list)

    def append(self, rec: CycleRecord) -> None:
        self.records.append(rec)

    def to_text(self) -> str:
        lines = [TRACE_HEADER]
        lines.extend(r.to_tsv() for r in self.records)
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())


class _Stage:
    __slots__ = ("index", "event", "cell", "new_state", "correct", "diff")

    def __init__(self, index, event, cell, new_state, correct, diff):
        self.index = index
        self.event = event
        self.cell = cell
        self.new_state = new_state
        self.correct = correct
        self.diff = diff


@dataclass(frozen=True)
class OutputBeat:
    """One EVENT OUT transfer: the event plus its correct flag."""

    event: Event
    correct: bool
    index: int
    diff_ts: int
    cycle: int


class PipelineSimulator:
    """Step-driven reference model; one instance per stream."""

    def __init__(self, config: PipelineConfig, trace: bool = False):
        self.config = config
        self.params = config.params
        self.map = TimeMap.for_params(config.params)
        self.trace: Optional[PipelineTrace] = PipelineTrace() if trace else None
        self.cycle = 0
        self.blocked_cycles = 0
        self.accepted = 0
        self.emitted = 0
        self.updates_run = 0
        self._stages: list = [None] * config.latency
        self._recent_cells: list = []
        self._recent_states: list = []
        self._phase = PHASE_IDLE
        self._pending_update = False
        self._drain_count = 0
        self._update_addr = 0
        self._started = False
        self._last_accepted_ts = 0

    # -- helpers -------------------------------------------------------------

    @property
    def _cells(self) -> int:
        return self.params.cells_x * self.params.cells_y

    def _flat(self, e: Event) -> int:
        s = self.params.scale_log2
        return (e.y >> s) * self.params.cells_x + (e.x >> s)

    def idle_and_ready(self) -> bool:
        return (
            self._phase == PHASE_IDLE
            and not self._pending_update
            and all(s is None for s in self._stages)
        )

    # -- the clock edge -------------------------------------------------------

    def step(self, inp: CycleInput):
        """Advance one cycle; returns (upstream_tready, output or None)."""
        cfg = self.config
        if self._pending_update:
            self._phase = (
                PHASE_DRAIN_IN if cfg.post_tlast_drain > 0 else PHASE_UPDATE
            )
            self._drain_count = 0
            self._update_addr = 0
            self._pending_update = False
        in_update = self._phase != PHASE_IDLE
        tready = inp.downstream_tready and not in_update
        if in_update:
            self.blocked_cycles += 1

        rec = None
        if self.trace is not None:
            rec = CycleRecord(
                cycle=self.cycle,
                tvalid=inp.tvalid,
                tready=tready,
                dready=inp.downstream_tready,
                phase=self._phase,
            )

        # Stage movement; a stalled downstream freezes everything.
        output = None
        if inp.downstream_tready:
            tail = self._stages[-1]
            if tail is not None:
                output = OutputBeat(
                    tail.event, tail.correct, tail.index, tail.diff, self.cycle
                )
                self.emitted += 1
                if rec is not None:
                    rec.output = (tail.index, tail.correct)
            for i in range(len(self._stages) - 1, 0, -1):
                self._stages[i] = self._stages[i - 1]
            self._stages[0] = None
            # The state write lands when the entry reaches the last stage,
            # mem_read_latency cycles after its accept.
            entered = self._stages[-1]
            if entered is not None and rec is not None:
                rec.mem_write = (entered.cell, entered.new_state)

        # Accept.
        if inp.tvalid and tready:
            e = inp.tdata
            if e is None:
                raise StreamError(self.accepted, "tvalid asserted without tdata")
            if inp.tlast and not e.packet_last:
                e = Event(e.ts, e.x, e.y, e.polarity, e.is_noise, True)
            p = self.params
            if not (0 <= e.x < p.sensor_width and 0 <= e.y < p.sensor_height):
                raise StreamError(self.accepted, f"({e.x},{e.y}) out of bounds")
            if e.ts < 0 or (self._started and e.ts < self._last_accepted_ts):
                raise StreamError(self.accepted, f"timestamp {e.ts} regresses")
            if not self._started:
                if p.init_state == INIT_FIRST_TS:
                    self.map.states.fill(e.ts)
                self._started = True
            cell = self._flat(e)
            fwd_slot = 0
            for slot, c in enumerate(self._recent_cells):
                if c == cell:
                    fwd_slot = slot + 1
                    state = self._recent_states[slot]
                    break
            else:
                state = int(self.map.states.flat[cell])
                if rec is not None:
                    rec.mem_read = cell
            diff = e.ts - state
            correct = diff < p.filter_length_us
            new_state = iir_update(state, e.ts, p.update_factor_log2)
            self.map.states.flat[cell] = new_state
            self.map.active.flat[cell] = True
            self.map.last_ts = e.ts
            self._last_accepted_ts = e.ts
            entry = _Stage(self.accepted, e, cell, new_state, correct, diff)
            assert self._stages[0] is None
            self._stages[0] = entry
            self._recent_cells.insert(0, cell)
            self._recent_states.insert(0, new_state)
            del self._recent_cells[cfg.forward_depth:]
            del self._recent_states[cfg.forward_depth:]
            if rec is not None:
                rec.accepted = self.accepted
                rec.fwd_slot = fwd_slot
            self.accepted += 1
            if e.packet_last and p.global_update.kind == "packet":
                self._pending_update = True

        # Global update sequencer.
        if self._phase == PHASE_DRAIN_IN:
            if inp.downstream_tready:
                self._drain_count += 1
                if self._drain_count >= cfg.post_tlast_drain:
                    self._phase = PHASE_UPDATE
                    self._update_addr = 0
        elif self._phase == PHASE_UPDATE:
            addr = self._update_addr
            if not self.map.active.flat[addr]:
                s = int(self.map.states.flat[addr])
                v = iir_update(s, self.map.last_ts, self.params.update_factor_log2)
                self.map.states.flat[addr] = v
                if rec is not None:
                    rec.mem_write = (addr, v)
            self._update_addr += 1
            if self._update_addr >= self._cells:
                if cfg.post_update_drain > 0:
                    self._phase = PHASE_DRAIN_OUT
                    self._drain_count = 0
                else:
                    self.map.active[:] = False
                    self.updates_run += 1
                    self._phase = PHASE_IDLE
        elif self._phase == PHASE_DRAIN_OUT:
            self._drain_count += 1
            if self._drain_count >= cfg.post_update_drain:
                self.map.active[:] = False
                self.updates_run += 1
                self._phase = PHASE_IDLE

        if rec is not None:
            rec.stages = tuple(None if s is None else s.index for s in self._stages)
            self.trace.append(rec)
        self.cycle += 1
        return tready, output

    def run_update_sequence(self) -> int:
        """Force one global update now and run it to completion.

        Returns the input-blocked cycle count of the sequence; the pipeline
        is stepped with an idle, always-ready bus.
        """
        if self._phase == PHASE_IDLE and not self._pending_update:
            self._pending_update = True
        before = self.blocked_cycles
        while not self.idle_and_ready():
            self.step(CycleInput.idle())
        return self.blocked_cycles - before


def global_update_sequence(sim: PipelineSimulator) -> int:
    """Run the pending (or a forced) global update; returns blocked cycles."""
    return sim.run_update_sequence()


# ---------------------------------------------------------------------------
# Trace-level and event-level drivers
# ---------------------------------------------------------------------------

@dataclass
class PipelineRun:
    """Outcome of driving a stream through the pipeline."""

    passed: np.ndarray
    diff_ts: np.ndarray
    map: TimeMap
    updates: int
    out_cycles: np.ndarray
    cycles: int
    blocked_cycles: int
    trace: Optional[PipelineTrace] = None

    def __len__(self) -> int:
        return len(self.passed)


def run_trace(sim: PipelineSimulator, inputs) -> tuple[list, TimeMap, Optional[PipelineTrace]]:
    """Drive explicit per-cycle bus samples; returns (outputs, map, trace).

    Enforces the hold rule: an event presented while tready is low must be
    presented unchanged on the next cycle, otherwise it would be lost.
    """
    outputs = []
    held: Optional[CycleInput] = None
    for i, inp in enumerate(inputs):
        if held is not None:
            if not inp.tvalid or inp.tdata != held.tdata or inp.tlast != held.tlast:
                raise StreamError(
                    i, "tdata changed while tready was low (hold rule violation)"
                )
        tready, out = sim.step(inp)
        if out is not None:
            outputs.append(out)
        held = inp if (inp.tvalid and not tready) else None
    return outputs, sim.map, sim.trace


def ready_pattern(duty: float, seed: int, length: int = 4093) -> np.ndarray:
    """Deterministic periodic downstream-ready pattern with the given duty."""
    if not 0.0 < duty <= 1.0:
        raise ValueError("duty must be in (0, 1]")
    if duty == 1.0:
        return np.ones(1, dtype=np.bool_)
    rng = np.random.default_rng(seed)
    pat = rng.random(length) < duty
    if not pat.any():
        pat[0] = True
    return pat


def _pipeline_loop(ts, xs, ys, lasts, gaps, ready, scale_log2, k,
                   filter_length, packet_update, mem_lat, fwd_depth,
                   drain_in, drain_out, states, active, cells_x,
                   init_first, max_cycles):
    """Event-level pipeline run, one iteration per clock (kernel twin).

    ``states``/``active`` are flat views updated in place. Returns
    (passed, diffs, out_cycles, cycles, blocked, updates, last_ts, ok).
    """
    n = ts.shape[0]
    n_cells = states.shape[0]
    n_stages = mem_lat + 1
    passed = np.zeros(n, np.bool_)
    diffs = np.zeros(n, np.int64)
    out_cycles = np.full(n, -1, np.int64)
    stages = np.full(n_stages, -1, np.int64)
    recent_cells = np.full(fwd_depth, -1, np.int64)
    recent_states = np.zeros(fwd_depth, np.int64)
    ready_len = ready.shape[0]

    phase = 0
    pending = False
    drain_count = 0
    update_addr = 0
    started = False
    last_ts = 0
    cycle = 0
    blocked = 0
    updates = 0
    next_event = 0
    wait = gaps[0] if n > 0 else 0
    emitted = 0

    while emitted < n or phase != 0 or pending:
        if cycle >= max_cycles:
            return passed, diffs, out_cycles, cycle, blocked, updates, last_ts, False
        dready = ready[cycle % ready_len]
        if pending:
            phase = 1 if drain_in > 0 else 2
            drain_count = 0
            update_addr = 0
            pending = False
        in_update = phase != 0
        tready = dready and not in_update
        if in_update:
            blocked += 1

        # Stage movement.
        if dready:
            tail = stages[n_stages - 1]
            if tail >= 0:
                out_cycles[tail] = cycle
                emitted += 1
            for i in range(n_stages - 1, 0, -1):
                stages[i] = stages[i - 1]
            stages[0] = -1

        # Upstream presentation and accept.
        if next_event < n:
            if wait > 0:
                wait -= 1
            elif tready:
                idx = next_event
                t = ts[idx]
                if not started:
                    if init_first:
                        for c in range(n_cells):
                            states[c] = t
                    started = True
                cell = (np.int64(ys[idx]) >> scale_log2) * cells_x + (
                    np.int64(xs[idx]) >> scale_log2
                )
                fwd = -1
                for slot in range(fwd_depth):
                    if recent_cells[slot] == cell:
                        fwd = slot
                        break
                if fwd >= 0:
                    state = recent_states[fwd]
                else:
                    state = states[cell]
                diff = t - state
                passed[idx] = diff < filter_length
                diffs[idx] = diff
                new_state = state + (diff >> k)
                states[cell] = new_state
                active[cell] = True
                last_ts = t
                for slot in range(fwd_depth - 1, 0, -1):
                    recent_cells[slot] = recent_cells[slot - 1]
                    recent_states[slot] = recent_states[slot - 1]
                recent_cells[0] = cell
                recent_states[0] = new_state
                stages[0] = idx
                if lasts[idx] and packet_update:
                    pending = True
                next_event += 1
                if next_event < n:
                    wait = gaps[next_event]

        # Global update sequencer.
        if phase == 1:
            if dready:
                drain_count += 1
                if drain_count >= drain_in:
                    phase = 2
                    update_addr = 0
        elif phase == 2:
            if not active[update_addr]:
                s = states[update_addr]
                states[update_addr] = s + ((last_ts - s) >> k)
            update_addr += 1
            if update_addr >= n_cells:
                if drain_out > 0:
                    phase = 3
                    drain_count = 0
                else:
                    for c in range(n_cells):
                        active[c] = False
                    updates += 1
                    phase = 0
        elif phase == 3:
            drain_count += 1
            if drain_count >= drain_out:
                for c in range(n_cells):
                    active[c] = False
                updates += 1
                phase = 0

        cycle += 1

    return passed, diffs, out_cycles, cycle, blocked, updates, last_ts, True


if _HAVE_NUMBA:
    _pipeline_kernel = njit(cache=True)(_pipeline_loop)
else:
    _pipeline_kernel = _pipeline_loop


def run_events(
    config: PipelineConfig,
    stream: EventStream,
    *,
    ready_duty: float = 1.0,
    ready_seed: int = 0,
    gaps: Optional[np.ndarray] = None,
    trace: bool = False,
    use_kernel: bool = True,
) -> PipelineRun:
    """Drive a whole stream through the pipeline with proper handshaking.

    ``ready_duty``/``ready_seed`` choose a deterministic periodic downstream
    stall pattern; ``gaps[i]`` inserts idle input cycles before event i.
    With ``trace=True`` the per-cycle record is kept (forces the step-driven
    reference path).
    """
    validate_stream(stream, config.params)
    n = len(stream)
    if gaps is None:
        gaps = np.zeros(n, dtype=np.int64)
    else:
        gaps = np.asarray(gaps, dtype=np.int64)
        if len(gaps) != n:
            raise ValueError("gaps must have one entry per event")
        if n and gaps.min() < 0:
            raise ValueError("gaps must be >= 0")
    pattern = ready_pattern(ready_duty, ready_seed)

    if use_kernel and not trace:
        tmap = TimeMap.for_params(config.params)
        p = config.params
        n_updates_possible = int(stream.packet_last.sum()) + 1
        base = (
            n
            + int(gaps.sum())
            + n_updates_possible
            * (config.post_tlast_drain + p.cells_x * p.cells_y + config.post_update_drain)
            + 64
        )
        duty_scale = max(1, int(len(pattern) / max(1, int(pattern.sum()))))
        max_cycles = base * duty_scale * 4 + 1024
        out = _pipeline_kernel(
            stream.ts, stream.x, stream.y,
            stream.packet_last, gaps, pattern,
            p.scale_log2, p.update_factor_log2, p.filter_length_us,
            p.global_update.kind == "packet",
            config.mem_read_latency, config.forward_depth,
            config.post_tlast_drain, config.post_update_drain,
            tmap.states.reshape(-1), tmap.active.reshape(-1), p.cells_x,
            p.init_state == INIT_FIRST_TS, max_cycles,
        )
        passed, diffs, out_cycles, cycles, blocked, updates, last_ts, ok = out
        if not ok:
            raise RuntimeError("pipeline run exceeded its cycle budget")
        tmap.last_ts = int(last_ts)
        return PipelineRun(
            passed, diffs, tmap, int(updates), out_cycles,
            int(cycles), int(blocked),
        )

    # Step-driven reference path.
    sim = PipelineSimulator(config, trace=trace)
    passed = np.zeros(n, np.bool_)
    diffs = np.zeros(n, np.int64)
    out_cycles = np.full(n, -1, np.int64)
    next_event = 0
    wait = int(gaps[0]) if n else 0
    emitted = 0
    cycle = 0
    while emitted < n or not sim.idle_and_ready():
        dready = bool(pattern[cycle % len(pattern)])
        inp = CycleInput.idle(dready)
        presenting = False
        if next_event < n:
            if wait > 0:
                wait -= 1
            else:
                e = stream.event(next_event)
                inp = CycleInput(True, e, e.packet_last, dready)
                presenting = True
        tready, out = sim.step(inp)
        if out is not None:
            passed[out.index] = out.correct
            diffs[out.index] = out.diff_ts
            out_cycles[out.index] = out.cycle
            emitted += 1
        if presenting and tready:
            next_event += 1
            if next_event < n:
                wait = int(gaps[next_event])
        cycle += 1
    return PipelineRun(
        passed, diffs, sim.map, sim.updates_run, out_cycles,
        sim.cycle, sim.blocked_cycles, sim.trace,
    )
