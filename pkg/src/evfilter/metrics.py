"""Filtering-efficiency metrics, timestamp histograms, throughput benchmark."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .events import EventStream, FilterParams
from .filtering import filter_stream
from .synth import inject_noise


@dataclass(frozen=True)
class EvalReport:
    """Surviving fractions of original and injected-noise events.

    A fraction is None when its denominator is zero (no events of that
    class in the input).
    """

    original_total: int
    noise_total: int
    original_passed: int
    noise_passed: int
    params: Optional[FilterParams] = None

    @property
    def original_remaining(self) -> Optional[float]:
        if self.original_total == 0:
            return None
        return self.original_passed / self.original_total

    @property
    def noise_remaining(self) -> Optional[float]:
        if self.noise_total == 0:
            return None
        return self.noise_passed / self.noise_total


def evaluate(
    stream: EventStream,
    passed: np.ndarray,
    params: Optional[FilterParams] = None,
) -> EvalReport:
    """Count surviving original/noise events; order-independent."""
    if stream.labels is None:
        raise ValueError("evaluation needs a labeled stream")
    if len(passed) != len(stream):
        raise ValueError("one decision per event required")
    noise = stream.labels != 0
    passed = np.asarray(passed, dtype=np.bool_)
    return EvalReport(
        original_total=int(np.count_nonzero(~noise)),
        noise_total=int(np.count_nonzero(noise)),
        original_passed=int(np.count_nonzero(~noise & passed)),
        noise_passed=int(np.count_nonzero(noise & passed)),
        params=params,
    )


# ---------------------------------------------------------------------------
# Timestamp histogram and noise-floor estimate
# ---------------------------------------------------------------------------

@dataclass
class HistogramReport:
    """Events per time bin, plus (after estimation) the noise-floor fields.

    The estimate treats high-count bins as object motion, discards them
    once, and extrapolates the mean of the remaining bins over the span;
    it is a lower limit for the true noise count.
    """

    bin_width_us: int
    bin_starts: np.ndarray
    counts: np.ndarray
    discarded: Optional[np.ndarray] = None
    noise_rate_per_us: Optional[float] = None
    estimated_noise_events: Optional[float] = None
    estimated_noise_fraction: Optional[float] = None

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def timestamp_histogram(stream: EventStream, bin_width_us: int) -> HistogramReport:
    """Counts per [k*w, (k+1)*w) bin over the recording span."""
    if bin_width_us <= 0:
        raise ValueError("bin_width_us must be positive")
    if len(stream) == 0:
        return HistogramReport(
            bin_width_us=bin_width_us,
            bin_starts=np.empty(0, np.int64),
            counts=np.empty(0, np.int64),
        )
    bins = stream.ts // bin_width_us
    first = int(bins[0])
    last = int(bins[-1])
    counts = np.bincount((bins - first).astype(np.int64), minlength=last - first + 1)
    starts = (np.arange(first, last + 1, dtype=np.int64)) * bin_width_us
    return HistogramReport(
        bin_width_us=bin_width_us,
        bin_starts=starts,
        counts=counts.astype(np.int64),
    )


def estimate_noise_floor(
    report: HistogramReport, duration_us: Optional[int] = None
) -> HistogramReport:
    """Lower-limit noise estimate from the histogram's quiet bins.

    Bins with more than twice the median count are discarded (once) as
    object motion; the mean of the rest, scaled to ``duration_us``
    (defaulting to the histogram span), estimates the noise event count.
    """
    if len(report.counts) == 0:
        raise ValueError("empty histogram")
    counts = report.counts
    median = float(np.median(counts))
    discarded = counts > 2 * median
    retained = counts[~discarded]
    if retained.size == 0:
        raise ValueError("all bins discarded; no quiet bins to average")
    if duration_us is None:
        duration_us = int(len(counts)) * report.bin_width_us
    mean = float(retained.mean())
    estimate = mean * (duration_us / report.bin_width_us)
    total = report.total
    return HistogramReport(
        bin_width_us=report.bin_width_us,
        bin_starts=report.bin_starts,
        counts=report.counts,
        discarded=discarded,
        noise_rate_per_us=mean / report.bin_width_us,
        estimated_noise_events=estimate,
        estimated_noise_fraction=(estimate / total) if total else None,
    )


def render_histogram_csv(report: HistogramReport) -> str:
    lines = ["bin_start_us,count"]
    for start, count in zip(report.bin_starts, report.counts):
        lines.append(f"{int(start)},{int(count)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Noise-rate sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    rate_per_ms: float
    report: EvalReport


def sweep(
    base: EventStream,
    rates_per_ms,
    params: FilterParams,
    *,
    seed: int = 0,
) -> list[SweepRow]:
    """Filtering efficiency per injected-noise rate on one base recording.

    Each rate gets an independent noise draw derived from ``seed``; rows
    come back in the given rate order.
    """
    if base.labels is None:
        raise ValueError("sweep needs a labeled base stream")
    rows = []
    for i, rate in enumerate(rates_per_ms):
        if rate > 0:
            noisy = inject_noise(base, rate, seed=seed + i)
        else:
            noisy = base
        result = filter_stream(noisy, params)
        rows.append(SweepRow(float(rate), evaluate(noisy, result.passed, params)))
    return rows


def _fmt_fraction(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.4f}"


def render_sweep_csv(rows) -> str:
    lines = ["noise_rate_ev_per_ms,noise_remaining,original_remaining"]
    for row in rows:
        rate = row.rate_per_ms
        rate_txt = str(int(rate)) if float(rate).is_integer() else f"{rate:g}"
        lines.append(
            f"{rate_txt},{_fmt_fraction(row.report.noise_remaining)},"
            f"{_fmt_fraction(row.report.original_remaining)}"
        )
    return "\n".join(lines) + "\n"


def render_eval_csv(report: EvalReport) -> str:
    header = (
        "noise_remaining,original_remaining,"
        "original_total,noise_total,original_passed,noise_passed"
    )
    row = (
        f"{_fmt_fraction(report.noise_remaining)},"
        f"{_fmt_fraction(report.original_remaining)},"
        f"{report.original_total},{report.noise_total},"
        f"{report.original_passed},{report.noise_passed}"
    )
    return header + "\n" + row + "\n"


# ---------------------------------------------------------------------------
# Software throughput benchmark
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchReport:
    engine: str
    n_events: int
    runs: tuple
    meps_median: float


def bench_throughput(
    engine: str,
    stream: EventStream,
    params: FilterParams,
    *,
    runs: int = 5,
) -> BenchReport:
    """Measured events/second of the software paths (median of warm runs).

    ``engine`` is 'functional' (vectorized filter) or 'pipeline'
    (cycle-level model, one cycle per event plus update overhead).
    """
    if len(stream) < 10**6:
        raise ValueError("benchmark needs at least 1e6 events")
    if runs < 5:
        raise ValueError("at least 5 runs required")
    if engine == "functional":
        def once():
            filter_stream(stream, params)
    elif engine == "pipeline":
        from .pipeline import PipelineConfig, run_events

        config = PipelineConfig(params=params)

        def once():
            run_events(config, stream)
    else:
        raise ValueError(f"unknown engine {engine!r}")

    once()  # warm caches and JIT
    rates = []
    for _ in range(runs):
        t0 = time.perf_counter()
        once()
        dt = time.perf_counter() - t0
        rates.append(len(stream) / dt)
    return BenchReport(
        engine=engine,
        n_events=len(stream),
        runs=tuple(rates),
        meps_median=float(np.median(rates)) / 1e6,
    )
