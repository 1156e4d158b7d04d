"""Figure rendering for the report-producing CLI paths.

Each helper writes one file next to the delimited output it illustrates;
nothing here feeds back into the numeric pipeline.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_FIG_SIZE = (6.0, 3.7)


def save_discard_curve_figure(rows, path) -> None:
    """rows: (idle_time_us, discarded) pairs from the discard curve."""
    idle = [r[0] for r in rows]
    counts = [r[1] for r in rows]
    fig, ax = plt.subplots(figsize=_FIG_SIZE)
    ax.plot(idle, counts, marker="o", lw=1.2)
    ax.set_xlabel("idle time before burst [us]")
    ax.set_ylabel("events discarded")
    ax.set_title("Discarded events vs. idle time")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_histogram_figure(report, path) -> None:
    """Event-count histogram; discarded (motion) bins marked when present."""
    fig, ax = plt.subplots(figsize=_FIG_SIZE)
    starts = np.asarray(report.bin_starts, dtype=float)
    counts = np.asarray(report.counts, dtype=float)
    width = report.bin_width_us
    if report.discarded is not None:
        quiet = ~report.discarded
        ax.bar(starts[quiet], counts[quiet], width=width, align="edge",
               color="tab:blue", label="quiet bins")
        ax.bar(starts[report.discarded], counts[report.discarded], width=width,
               align="edge", color="tab:orange", label="discarded (motion)")
        if report.noise_rate_per_us is not None:
            ax.axhline(report.noise_rate_per_us * width, color="k", ls="--",
                       lw=1, label="noise floor")
        ax.legend(fontsize=8)
    else:
        ax.bar(starts, counts, width=width, align="edge", color="tab:blue")
    ax.set_xlabel("timestamp [us]")
    ax.set_ylabel("events per bin")
    ax.set_title("Event timestamp histogram")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_figure(rows, path) -> None:
    """rows: SweepRow list; plots remaining fractions vs. noise rate."""
    rates, noise_rem, orig_rem = [], [], []
    for row in rows:
        if row.rate_per_ms <= 0 or row.report.noise_remaining is None:
            continue
        rates.append(row.rate_per_ms)
        noise_rem.append(100.0 * row.report.noise_remaining)
        orig_rem.append(
            100.0 * row.report.original_remaining
            if row.report.original_remaining is not None
            else float("nan")
        )
    fig, ax = plt.subplots(figsize=_FIG_SIZE)
    ax.semilogx(rates, noise_rem, marker="o", label="noise remaining")
    ax.semilogx(rates, orig_rem, marker="s", label="original remaining")
    ax.set_xlabel("injected noise [events/ms]")
    ax.set_ylabel("remaining after filtering [%]")
    ax.set_ylim(0, 105)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
