"""Core data model: events, event streams, filter parameters, state map."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

# Timestamps are microseconds, kept within int64 so signed differences are exact.
MAX_TS = (1 << 63) - 1
MAX_COORD = 0xFFFF

VALID_SCALES = (1, 2, 4, 8, 16, 32, 64, 128, 256)

INIT_ZERO = "zero"
INIT_FIRST_TS = "first-ts"


class ParamError(ValueError):
    """Invalid filter parameter combination."""


class StreamError(ValueError):
    """Stream validation failure; ``index`` is the first offending event."""

    def __init__(self, index: int, message: str):
        super().__init__(f"event {index}: {message}")
        self.index = index


class MonotonicityError(StreamError):
    pass


class BoundsError(StreamError):
    pass


# ---------------------------------------------------------------------------
# Global update policy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GlobalUpdate:
    """When the engine relaxes the states of inactive areas.

    kind is one of 'none', 'time' (every ``period_us`` of stream time),
    'count' (every ``count`` processed events) or 'packet' (after each
    event flagged packet_last).
    """

    kind: str = "none"
    period_us: int = 0
    count: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "time", "count", "packet"):
            raise ParamError(f"unknown global update kind {self.kind!r}")
        if self.kind == "time" and self.period_us <= 0:
            raise ParamError("time-based global update needs period_us > 0")
        if self.kind == "count" and self.count < 1:
            raise ParamError("count-based global update needs count >= 1")

    @classmethod
    def disabled(cls) -> "GlobalUpdate":
        return cls("none")

    @classmethod
    def by_time(cls, period_us: int) -> "GlobalUpdate":
        return cls("time", period_us=int(period_us))

    @classmethod
    def by_count(cls, count: int) -> "GlobalUpdate":
        return cls("count", count=int(count))

    @classmethod
    def per_packet(cls) -> "GlobalUpdate":
        return cls("packet")

    @classmethod
    def parse(cls, text: str) -> "GlobalUpdate":
        """Parse the CLI syntax: none | time:<us> | count:<n> | packet."""
        if text == "none":
            return cls.disabled()
        if text == "packet":
            return cls.per_packet()
        if text.startswith("time:"):
            return cls.by_time(int(text[5:]))
        if text.startswith("count:"):
            return cls.by_count(int(text[6:]))
        raise ParamError(f"cannot parse global update spec {text!r}")

    def __str__(self) -> str:
        if self.kind == "time":
            return f"time:{self.period_us}"
        if self.kind == "count":
            return f"count:{self.count}"
        return self.kind


# ---------------------------------------------------------------------------
# Filter parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FilterParams:
    """Geometry and filter configuration shared by all engines."""

    sensor_width: int
    sensor_height: int
    scale: int = 16
    filter_length_us: int = 200
    update_factor_log2: int = 2
    global_update: GlobalUpdate = field(default_factory=GlobalUpdate.disabled)
    init_state: str = INIT_ZERO

    def __post_init__(self):
        if not (0 < self.sensor_width <= MAX_COORD + 1):
            raise ParamError(f"sensor_width {self.sensor_width} out of range")
        if not (0 < self.sensor_height <= MAX_COORD + 1):
            raise ParamError(f"sensor_height {self.sensor_height} out of range")
        if self.scale not in VALID_SCALES:
            raise ParamError(f"scale must be a power of two in {VALID_SCALES}")
        if self.filter_length_us <= 0:
            raise ParamError("filter_length_us must be positive")
        if not (1 <= self.update_factor_log2 <= 8):
            raise ParamError("update_factor_log2 must be in 1..8")
        if self.init_state not in (INIT_ZERO, INIT_FIRST_TS):
            raise ParamError(f"unknown init_state {self.init_state!r}")

    @property
    def scale_log2(self) -> int:
        return self.scale.bit_length() - 1

    @property
    def cells_x(self) -> int:
        return -(-self.sensor_width // self.scale)

    @property
    def cells_y(self) -> int:
        return -(-self.sensor_height // self.scale)

    @property
    def update_factor(self) -> float:
        return 2.0 ** -self.update_factor_log2


def cell_of(x: int, y: int, scale: int) -> tuple[int, int]:
    """Area coordinates of pixel (x, y); scale must be a power of two."""
    if scale not in VALID_SCALES:
        raise ParamError(f"scale must be a power of two in {VALID_SCALES}")
    shift = scale.bit_length() - 1
    return x >> shift, y >> shift


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    """A single sensor event. ``is_noise`` is None when unlabeled."""

    ts: int
    x: int
    y: int
    polarity: int = 1
    is_noise: Optional[int] = None
    packet_last: bool = False


def _as_coord(values, name: str) -> np.ndarray:
    """Coerce to uint16, refusing the silent wraparound of wider arrays."""
    arr = np.asarray(values)
    if arr.dtype != np.uint16:
        if arr.size and (int(arr.min()) < 0 or int(arr.max()) > MAX_COORD):
            raise ValueError(f"{name} coordinate exceeds the 16-bit range")
        arr = arr.astype(np.uint16)
    return arr


@dataclass
class EventStream:
    """Columnar event container tied to a sensor geometry.

    ts is int64 microseconds, x/y uint16, polarity uint8 (0/1).
    ``labels`` is None for unlabeled streams, else uint8 (1 = injected noise).
    """

    width: int
    height: int
    ts: np.ndarray
    x: np.ndarray
    y: np.ndarray
    polarity: np.ndarray
    labels: Optional[np.ndarray] = None
    packet_last: Optional[np.ndarray] = None

    def __post_init__(self):
        self.ts = np.asarray(self.ts, dtype=np.int64)
        self.x = _as_coord(self.x, "x")
        self.y = _as_coord(self.y, "y")
        self.polarity = np.asarray(self.polarity, dtype=np.uint8)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.packet_last is None:
            self.packet_last = np.zeros(len(self.ts), dtype=np.bool_)
        else:
            self.packet_last = np.asarray(self.packet_last, dtype=np.bool_)
        n = len(self.ts)
        for name in ("x", "y", "polarity", "packet_last"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has mismatched length")
        if self.labels is not None and len(self.labels) != n:
            raise ValueError("column labels has mismatched length")

    def __len__(self) -> int:
        return len(self.ts)

    def event(self, i: int) -> Event:
        return Event(
            ts=int(self.ts[i]),
            x=int(self.x[i]),
            y=int(self.y[i]),
            polarity=int(self.polarity[i]),
            is_noise=None if self.labels is None else int(self.labels[i]),
            packet_last=bool(self.packet_last[i]),
        )

    def __iter__(self) -> Iterator[Event]:
        return (self.event(i) for i in range(len(self)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        if (self.width, self.height) != (other.width, other.height):
            return False
        if len(self) != len(other):
            return False
        same = (
            np.array_equal(self.ts, other.ts)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.polarity, other.polarity)
            and np.array_equal(self.packet_last, other.packet_last)
        )
        if not same:
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        return self.labels is None or np.array_equal(self.labels, other.labels)

    @classmethod
    def empty(cls, width: int, height: int, labeled: bool = False) -> "EventStream":
        return cls(
            width=width,
            height=height,
            ts=np.empty(0, np.int64),
            x=np.empty(0, np.uint16),
            y=np.empty(0, np.uint16),
            polarity=np.empty(0, np.uint8),
            labels=np.empty(0, np.uint8) if labeled else None,
        )

    @classmethod
    def from_events(cls, events, width: int, height: int) -> "EventStream":
        events = list(events)
        labeled = any(e.is_noise is not None for e in events)
        return cls(
            width=width,
            height=height,
            ts=np.array([e.ts for e in events], np.int64),
            x=np.array([e.x for e in events], np.uint16),
            y=np.array([e.y for e in events], np.uint16),
            polarity=np.array([e.polarity for e in events], np.uint8),
            labels=(
                np.array([e.is_noise or 0 for e in events], np.uint8)
                if labeled
                else None
            ),
            packet_last=np.array([e.packet_last for e in events], np.bool_),
        )


def validate_stream(stream: EventStream, params: Optional[FilterParams] = None) -> None:
    """Raise BoundsError/MonotonicityError at the first offending index.

    Events are checked in order; at each index a bounds violation is
    reported before a timestamp regression at the same index.
    """
    width = params.sensor_width if params is not None else stream.width
    height = params.sensor_height if params is not None else stream.height
    n = len(stream)
    if n == 0:
        return
    bad = (stream.x >= width) | (stream.y >= height) | (stream.ts < 0)
    first_bounds = int(np.argmax(bad)) if bad.any() else n
    drops = np.asarray(stream.ts[1:], np.int64) < np.asarray(stream.ts[:-1], np.int64)
    first_drop = int(np.argmax(drops)) + 1 if drops.any() else n
    if first_bounds <= first_drop and first_bounds < n:
        i = first_bounds
        raise BoundsError(
            i,
            f"({int(stream.x[i])},{int(stream.y[i])},ts={int(stream.ts[i])}) outside "
            f"{width}x{height} geometry or negative ts",
        )
    if first_drop < n:
        raise MonotonicityError(
            first_drop,
            f"ts {int(stream.ts[first_drop])} < previous {int(stream.ts[first_drop - 1])}",
        )


# ---------------------------------------------------------------------------
# Filter state
# ---------------------------------------------------------------------------

@dataclass
class TimeMap:
    """Matrix of per-area IIR states plus the since-last-update activity flags."""

    states: np.ndarray
    active: np.ndarray
    last_ts: int = 0

    @classmethod
    def for_params(cls, params: FilterParams, fill: int = 0) -> "TimeMap":
        shape = (params.cells_y, params.cells_x)
        return cls(
            states=np.full(shape, fill, dtype=np.int64),
            active=np.zeros(shape, dtype=np.bool_),
            last_ts=0,
        )

    def copy(self) -> "TimeMap":
        return TimeMap(self.states.copy(), self.active.copy(), self.last_ts)

    def equals(self, other: "TimeMap") -> bool:
        return (
            np.array_equal(self.states, other.states)
            and np.array_equal(self.active, other.active)
            and self.last_ts == other.last_ts
        )


@dataclass(frozen=True)
class FilterDecision:
    """Per-event verdict. ``passed`` is False when classified as noise."""

    event: Event
    passed: bool
    diff_ts: int


# ---------------------------------------------------------------------------
# Storage accounting
# ---------------------------------------------------------------------------

def timemap_storage_bits(
    width: int, height: int, scale: int, state_bits: int = 64
) -> int:
    """Bits of state memory for an area grid covering width x height pixels."""
    cells_x = -(-width // scale)
    cells_y = -(-height // scale)
    return cells_x * cells_y * state_bits

def per_pixel_storage_bits(width: int, height: int, state_bits: int = 32) -> int:
    """Bits needed by a one-timestamp-per-pixel baseline filter."""
    return width * height * state_bits

def event_stream_bytes(n_events: int, record_bytes: int = 16) -> int:
    """Payload size of a stream; 8-byte records are a common compact layout,
    this package's binary format uses 16 bytes per event."""
    return n_events * record_bytes
