"""Labeled test inputs: uniform random noise and simple moving-object scenes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import EventStream, validate_stream


@dataclass(frozen=True)
class NoiseSpec:
    """Homogeneous random noise: mean ``rate`` events per millisecond."""

    width: int
    height: int
    duration_us: int
    rate_per_ms: float
    seed: int = 0

    def __post_init__(self):
        if self.rate_per_ms < 0:
            raise ValueError("rate_per_ms must be >= 0")
        if self.duration_us <= 0:
            raise ValueError("duration_us must be positive")


def generate_noise(spec: NoiseSpec) -> EventStream:
    """Poisson-process noise, uniform over pixels, fair-coin polarity.

    Deterministic for a given spec: the draw order (count, timestamps,
    x, y, polarity) is fixed.
    """
    rng = np.random.default_rng(spec.seed)
    mean = spec.rate_per_ms * spec.duration_us / 1000.0
    n = int(rng.poisson(mean)) if mean > 0 else 0
    ts = np.sort(rng.integers(0, spec.duration_us, size=n, dtype=np.int64))
    x = rng.integers(0, spec.width, size=n, dtype=np.int64).astype(np.uint16)
    y = rng.integers(0, spec.height, size=n, dtype=np.int64).astype(np.uint16)
    pol = rng.integers(0, 2, size=n, dtype=np.int64).astype(np.uint8)
    return EventStream(
        width=spec.width,
        height=spec.height,
        ts=ts,
        x=x,
        y=y,
        polarity=pol,
        labels=np.ones(n, dtype=np.uint8),
    )


@dataclass(frozen=True)
class MovingObject:
    """A disc sweeping the frame; emits events where its silhouette moves."""

    x0: float
    y0: float
    vx_px_per_ms: float
    vy_px_per_ms: float
    radius_px: float
    density: float = 1.0  # mean events per newly covered / uncovered pixel

    def center_at(self, t_us: float) -> tuple[float, float]:
        return (
            self.x0 + self.vx_px_per_ms * t_us / 1000.0,
            self.y0 + self.vy_px_per_ms * t_us / 1000.0,
        )


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    duration_us: int
    objects: tuple = ()
    seed: int = 0


def _disc_pixels(cx: float, cy: float, r: float, width: int, height: int):
    """Integer pixels within radius r of (cx, cy), clipped to the frame."""
    x_lo = max(0, int(np.floor(cx - r)))
    x_hi = min(width - 1, int(np.ceil(cx + r)))
    y_lo = max(0, int(np.floor(cy - r)))
    y_hi = min(height - 1, int(np.ceil(cy + r)))
    if x_lo > x_hi or y_lo > y_hi:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    ys, xs = np.mgrid[y_lo : y_hi + 1, x_lo : x_hi + 1]
    mask = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
    return xs[mask].astype(np.int64), ys[mask].astype(np.int64)


def generate_scene(spec: SceneSpec) -> EventStream:
    """Correlated events from each object's swept silhouette (label 0).

    Time advances in steps short enough that no object moves more than half
    a pixel per step; pixels entering the silhouette emit polarity-1 events,
    pixels leaving emit polarity-0 events, ``density`` per pixel on average.
    A static object emits nothing (no brightness change without motion).
    """
    rng = np.random.default_rng(spec.seed)
    chunks = []  # (ts, x, y, pol) arrays per step, in time order

    speeds = [
        max(abs(o.vx_px_per_ms), abs(o.vy_px_per_ms)) for o in spec.objects
    ]
    v_max = max(speeds, default=0.0)
    if v_max <= 0.0:
        step = spec.duration_us
    else:
        step = max(1, int(500.0 / v_max))  # <= 0.5 px of motion per step

    prev = {}
    for i, obj in enumerate(spec.objects):
        cx, cy = obj.center_at(0)
        xs, ys = _disc_pixels(cx, cy, obj.radius_px, spec.width, spec.height)
        prev[i] = set(zip(xs.tolist(), ys.tolist()))

    t = step
    while t <= spec.duration_us:
        step_px = []  # (x, y, polarity, density) per crossing pixel
        for i, obj in enumerate(spec.objects):
            cx, cy = obj.center_at(t)
            xs, ys = _disc_pixels(cx, cy, obj.radius_px, spec.width, spec.height)
            cur = set(zip(xs.tolist(), ys.tolist()))
            entering = cur - prev[i]
            leaving = prev[i] - cur
            prev[i] = cur
            for px, py in sorted(entering):
                step_px.append((px, py, 1, obj.density))
            for px, py in sorted(leaving):
                step_px.append((px, py, 0, obj.density))
        if step_px:
            xs, ys, ps = [], [], []
            for px, py, pol, density in step_px:
                for _ in range(_draw_count(rng, density)):
                    xs.append(px)
                    ys.append(py)
                    ps.append(pol)
            if xs:
                offs = np.sort(rng.integers(0, step, size=len(xs), dtype=np.int64))
                chunks.append(
                    (
                        (t - step) + offs,
                        np.array(xs, np.uint16),
                        np.array(ys, np.uint16),
                        np.array(ps, np.uint8),
                    )
                )
        t += step

    if not chunks:
        return EventStream.empty(spec.width, spec.height, labeled=True)
    ts = np.concatenate([c[0] for c in chunks])
    x = np.concatenate([c[1] for c in chunks])
    y = np.concatenate([c[2] for c in chunks])
    pol = np.concatenate([c[3] for c in chunks])
    return EventStream(
        width=spec.width,
        height=spec.height,
        ts=ts,
        x=x,
        y=y,
        polarity=pol,
        labels=np.zeros(len(ts), dtype=np.uint8),
    )


def merge_streams(a: EventStream, b: EventStream) -> EventStream:
    """Stable merge by timestamp; ties keep events from ``a`` first.

    If exactly one input is labeled the other is treated as all-original
    (label 0). Packet flags travel with their events; re-packetize after
    merging if packet boundaries matter.
    """
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError("cannot merge streams with different geometries")
    validate_stream(a)
    validate_stream(b)
    ts = np.concatenate([a.ts, b.ts])
    order = np.argsort(ts, kind="stable")
    labels = None
    if a.labels is not None or b.labels is not None:
        la = a.labels if a.labels is not None else np.zeros(len(a), np.uint8)
        lb = b.labels if b.labels is not None else np.zeros(len(b), np.uint8)
        labels = np.concatenate([la, lb])[order]
    return EventStream(
        width=a.width,
        height=a.height,
        ts=ts[order],
        x=np.concatenate([a.x, b.x])[order],
        y=np.concatenate([a.y, b.y])[order],
        polarity=np.concatenate([a.polarity, b.polarity])[order],
        labels=labels,
        packet_last=np.concatenate([a.packet_last, b.packet_last])[order],
    )


def inject_noise(
    stream: EventStream, rate_per_ms: float, seed: int = 0
) -> EventStream:
    """Merge fresh noise into a recording; originals get label 0.

    The noise spans the recording's time range and geometry.
    """
    if len(stream) == 0:
        start, duration = 0, 1
    else:
        start = int(stream.ts[0])
        duration = int(stream.ts[-1]) - start + 1
    base = stream
    spec = NoiseSpec(
        width=stream.width,
        height=stream.height,
        duration_us=duration,
        rate_per_ms=rate_per_ms,
        seed=seed,
    )
    noise = generate_noise(spec)
    if start:
        noise.ts = noise.ts + start
    if base.labels is None:
        base = EventStream(
            width=base.width,
            height=base.height,
            ts=base.ts,
            x=base.x,
            y=base.y,
            polarity=base.polarity,
            labels=np.zeros(len(base), np.uint8),
            packet_last=base.packet_last,
        )
    return merge_streams(base, noise)


def _draw_count(rng: np.random.Generator, density: float) -> int:
    """Events for one pixel crossing: floor(density) plus a Bernoulli remainder."""
    base = int(density)
    frac = density - base
    if frac > 0 and rng.random() < frac:
        base += 1
    return base
