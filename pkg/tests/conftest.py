import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from evfilter import EventStream
from evfilter.io import packetize

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much],
)
settings.load_profile("default")


def random_stream(
    seed,
    n,
    width=64,
    height=48,
    max_gap=300,
    same_cell_run=0,
    packet_every=0,
    labeled=False,
    start_ts=0,
):
    """Monotone random stream; same_cell_run > 0 injects adversarial bursts."""
    rng = np.random.default_rng(seed)
    ts = start_ts + np.cumsum(rng.integers(0, max_gap + 1, n, dtype=np.int64))
    x = rng.integers(0, width, n).astype(np.uint16)
    y = rng.integers(0, height, n).astype(np.uint16)
    if same_cell_run > 1 and n > 0:
        starts = rng.integers(0, n, max(1, n // (4 * same_cell_run)))
        for s in starts:
            e = min(n, s + same_cell_run)
            x[s:e] = x[s]
            y[s:e] = y[s]
    stream = EventStream(
        width=width,
        height=height,
        ts=ts,
        x=x,
        y=y,
        polarity=rng.integers(0, 2, n).astype(np.uint8),
        labels=rng.integers(0, 2, n).astype(np.uint8) if labeled else None,
    )
    if packet_every:
        stream = packetize(stream, packet_every)
    return stream


@pytest.fixture
def stream_factory():
    return random_stream
