"""Per-area IIR noise filter: per-event verify + state update, global update.

All state arithmetic is exact integer arithmetic in the canonical shift form
``state + ((ts - state) >> k)`` so that every execution path (scalar engine,
vectorized kernel, cycle-level pipeline model) produces bit-identical results.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .events import (
    INIT_FIRST_TS,
    INIT_ZERO,
    Event,
    EventStream,
    FilterDecision,
    FilterParams,
    StreamError,
    TimeMap,
    validate_stream,
)

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    njit = None
    _HAVE_NUMBA = False

_POLICY_CODES = {"none": 0, "time": 1, "count": 2, "packet": 3}


def iir_update(state: int, ts: int, update_factor_log2: int) -> int:
    """One IIR step: state + ((ts - state) >> k), arithmetic shift.

    The shift truncates toward negative infinity, so the same formula covers
    ts below the state (negative difference) without a special case.
    """
    return state + ((ts - state) >> update_factor_log2)


@dataclass
class StreamResult:
    """Decisions for a whole stream plus the final filter state."""

    passed: np.ndarray
    diff_ts: np.ndarray
    map: TimeMap
    updates: int

    def __len__(self) -> int:
        return len(self.passed)

    @property
    def n_passed(self) -> int:
        return int(np.count_nonzero(self.passed))

    @property
    def reject_fraction(self) -> float:
        n = len(self.passed)
        return 0.0 if n == 0 else 1.0 - self.n_passed / n


class FilterEngine:
    """Sequential reference engine owning one TimeMap.

    A single engine must be driven from one thread at a time; independent
    engines over disjoint streams are safe to run concurrently.
    """

    def __init__(self, params: FilterParams):
        self.params = params
        self.map = TimeMap.for_params(params)
        self.events_since_update = 0
        self.time_of_last_update = 0
        self.updates_run = 0
        self.processed = 0
        self._started = False

    # -- state handling -----------------------------------------------------

    def _start(self, first_ts: int) -> None:
        if self.params.init_state == INIT_FIRST_TS:
            self.map.states.fill(first_ts)
        # The update clock starts at the first event so a recording whose
        # timestamps begin far from zero does not see a spurious update.
        self.time_of_last_update = first_ts
        self._started = True

    def process_event(self, e: Event) -> FilterDecision:
        """Verify one event, update its area state, maybe run a global update."""
        p = self.params
        if not (0 <= e.x < p.sensor_width and 0 <= e.y < p.sensor_height):
            raise StreamError(self.processed, f"coordinates ({e.x},{e.y}) out of bounds")
        if e.ts < 0 or (self._started and e.ts < self.map.last_ts):
            raise StreamError(
                self.processed, f"timestamp {e.ts} regresses below {self.map.last_ts}"
            )
        if not self._started:
            self._start(e.ts)
        k = p.update_factor_log2
        cx = e.x >> p.scale_log2
        cy = e.y >> p.scale_log2
        state = int(self.map.states[cy, cx])
        diff = e.ts - state
        passed = diff < p.filter_length_us
        self.map.states[cy, cx] = iir_update(state, e.ts, k)
        self.map.active[cy, cx] = True
        self.map.last_ts = e.ts
        self.processed += 1
        self.events_since_update += 1

        gu = p.global_update
        if gu.kind == "time":
            if e.ts - self.time_of_last_update >= gu.period_us:
                self.run_global_update()
        elif gu.kind == "count":
            if self.events_since_update >= gu.count:
                self.run_global_update()
        elif gu.kind == "packet":
            if e.packet_last:
                self.run_global_update()
        return FilterDecision(event=e, passed=passed, diff_ts=diff)

    def run_global_update(self, now_ts: Optional[int] = None) -> int:
        """Relax every inactive area toward the current time.

        Active areas are untouched. Clears all activity flags and resets the
        event counter and update clock. Returns the number of areas written.
        """
        now = self.map.last_ts if now_ts is None else now_ts
        k = self.params.update_factor_log2
        inactive = ~self.map.active
        n = int(np.count_nonzero(inactive))
        if n:
            states = self.map.states
            states[inactive] += (now - states[inactive]) >> k
        self.map.active[:] = False
        self.events_since_update = 0
        self.time_of_last_update = now
        self.updates_run += 1
        return n

    def advance_time(self, now_us: int) -> int:
        """Fire the time-based updates an idle gap would have accumulated.

        The engine is event-driven, so during a gap with no events nothing
        fires on its own; callers that model idle wall-clock time use this to
        apply the pending updates one period at a time. Ticks landing exactly
        on ``now_us`` are left pending: an event arriving at that instant is
        processed first. Returns the number of updates fired.
        """
        gu = self.params.global_update
        fired = 0
        if gu.kind != "time":
            return fired
        while self.time_of_last_update + gu.period_us < now_us:
            tick = self.time_of_last_update + gu.period_us
            self.map.last_ts = max(self.map.last_ts, tick)
            self.run_global_update(now_ts=tick)
            fired += 1
        return fired

    def run(self, stream: EventStream) -> StreamResult:
        """Process a validated stream event by event (reference path)."""
        validate_stream(stream, self.params)
        n = len(stream)
        passed = np.zeros(n, np.bool_)
        diffs = np.zeros(n, np.int64)
        for i in range(n):
            d = self.process_event(stream.event(i))
            passed[i] = d.passed
            diffs[i] = d.diff_ts
        return StreamResult(passed, diffs, self.map, self.updates_run)


# ---------------------------------------------------------------------------
# Vectorized fast path
# ---------------------------------------------------------------------------

def _filter_loop(ts, xs, ys, lasts, scale_log2, k, filter_length, policy,
                 policy_value, states, active, init_first):
    """Pure-Python twin of the jitted kernel (used when numba is absent)."""
    n = ts.shape[0]
    passed = np.zeros(n, np.bool_)
    diffs = np.zeros(n, np.int64)
    cells_y, cells_x = states.shape
    last_ts = 0
    tolu = 0
    count = 0
    updates = 0
    for i in range(n):
        t = int(ts[i])
        if i == 0:
            if init_first:
                states[:, :] = t
            tolu = t
        cx = xs[i] >> scale_log2
        cy = ys[i] >> scale_log2
        state = int(states[cy, cx])
        diff = t - state
        passed[i] = diff < filter_length
        diffs[i] = diff
        states[cy, cx] = state + (diff >> k)
        active[cy, cx] = True
        last_ts = t
        count += 1
        fire = False
        if policy == 1:
            fire = last_ts - tolu >= policy_value
        elif policy == 2:
            fire = count >= policy_value
        elif policy == 3:
            fire = bool(lasts[i])
        if fire:
            for yy in range(cells_y):
                for xx in range(cells_x):
                    if not active[yy, xx]:
                        s = int(states[yy, xx])
                        states[yy, xx] = s + ((last_ts - s) >> k)
                    active[yy, xx] = False
            count = 0
            tolu = last_ts
            updates += 1
    return passed, diffs, last_ts, updates


if _HAVE_NUMBA:
    _filter_kernel = njit(cache=True)(_filter_loop)
else:
    _filter_kernel = _filter_loop


def filter_stream(
    stream: EventStream,
    params: FilterParams,
    *,
    use_kernel: bool = True,
) -> StreamResult:
    """Run the filter over a whole stream; deterministic in (stream, params)."""
    validate_stream(stream, params)
    n = len(stream)
    if n == 0:
        return StreamResult(
            np.zeros(0, np.bool_), np.zeros(0, np.int64),
            TimeMap.for_params(params), 0,
        )
    if not use_kernel:
        return FilterEngine(params).run(stream)
    gu = params.global_update
    policy = _POLICY_CODES[gu.kind]
    policy_value = gu.period_us if gu.kind == "time" else gu.count
    tmap = TimeMap.for_params(params)
    passed, diffs, last_ts, updates = _filter_kernel(
        stream.ts,
        stream.x,
        stream.y,
        stream.packet_last,
        params.scale_log2,
        params.update_factor_log2,
        params.filter_length_us,
        policy,
        policy_value,
        tmap.states,
        tmap.active,
        params.init_state == INIT_FIRST_TS,
    )
    tmap.last_ts = int(last_ts)
    return StreamResult(passed, diffs, tmap, int(updates))


def apply_filter(stream: EventStream, params: FilterParams) -> EventStream:
    """Convenience: return the stream with rejected events dropped."""
    result = filter_stream(stream, params)
    keep = result.passed
    return EventStream(
        width=stream.width,
        height=stream.height,
        ts=stream.ts[keep],
        x=stream.x[keep],
        y=stream.y[keep],
        polarity=stream.polarity[keep],
        labels=None if stream.labels is None else stream.labels[keep],
        packet_last=stream.packet_last[keep],
    )


# ---------------------------------------------------------------------------
# Discard curve
# ---------------------------------------------------------------------------

def _warm_engine(params: FilterParams, n_events: int = 64) -> tuple[FilterEngine, int]:
    """Drive one area to steady activity; returns (engine, last event ts)."""
    engine = FilterEngine(params)
    for t in range(n_events):
        engine.process_event(Event(ts=t, x=0, y=0))
    return engine, n_events - 1


def discard_curve(
    params: FilterParams,
    idle_times_us,
    burst_spacing_us: int = 1,
) -> list[tuple[int, int]]:
    """Rejected-event count after an idle gap, per idle duration.

    For each idle time T: one area is warmed to steady activity, a global
    update anchors the update clock at the end of the warm phase, the area
    then idles T microseconds (time-based updates fire once per elapsed
    period, oldest first), and a burst of same-area events at
    ``burst_spacing_us`` spacing follows. The reported count is the number
    of rejected events before the first one passes.
    """
    if burst_spacing_us < 1:
        raise ValueError("burst_spacing_us must be >= 1")
    rows = []
    for idle in idle_times_us:
        engine, warm_end = _warm_engine(params)
        if engine.params.global_update.kind != "none":
            engine.run_global_update()
        engine.advance_time(warm_end + int(idle))
        t = warm_end + int(idle)
        discarded = 0
        prev_diff = None
        while True:
            decision = engine.process_event(Event(ts=t, x=0, y=0))
            if decision.passed:
                break
            discarded += 1
            # While rejecting, the gap shrinks every event; once it stops
            # shrinking the burst is at its fixed point and will never pass.
            if prev_diff is not None and decision.diff_ts >= prev_diff:
                raise ValueError(
                    "burst spacing too coarse for this filter length; "
                    "the burst can never pass"
                )
            prev_diff = decision.diff_ts
            t += burst_spacing_us
        rows.append((int(idle), discarded))
    return rows
