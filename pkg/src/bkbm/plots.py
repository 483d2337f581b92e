"""Figure rendering for report outputs.

Kept optional and import-light: matplotlib loads only when a plot is asked
for, with the Agg backend so runs work headless.  Figures land next to the
delimited output files; the CSV/JSON remain the machine contract.
"""

from __future__ import annotations

import numpy as np


def _pyplot():
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt
    return plt


def plot_expansion_report(report, path: str) -> str:
    """Observed vs predicted normalized counts plus the scaled-residual decay."""
    plt = _pyplot()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    t = np.asarray(report.t)
    ax1.plot(t, report.observed, "o-", label="observed", ms=4)
    ax1.plot(t, report.predicted, "s--", label=f"order-{report.m} prediction", ms=4)
    ax1.set_xlabel("t")
    ax1.set_ylabel("normalized count")
    ax1.legend(frameon=False)
    scaled = np.abs(np.asarray(report.residual_scaled))
    ax2.semilogy(t, np.where(scaled > 0, scaled, np.nan), "o-", ms=4)
    ax2.set_xlabel("t")
    ax2.set_ylabel(rf"$|$residual$| \cdot t^{{{report.m}}}$")
    fig.suptitle(f"{report.mode} check, regime {report.regime}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_kesten_report(report, path: str) -> str:
    """Compensated log-count trajectory and its stabilization."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(report.t, report.compensated, "o-", ms=4, label="compensated log count")
    if report.fitted_constant is not None:
        ax.axhline(np.log(report.fitted_constant), ls="--", lw=1, color="gray",
                   label="fitted constant (log)")
    ax.set_xlabel("t")
    ax.set_ylabel("log E Z - growth t + b log t")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_martingale_rows(rows, path: str) -> str:
    """Checkpoint series per order index from (k, theta, r_n, value) rows."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    rows = list(rows)
    ks = sorted({r[0] for r in rows})
    for k in ks:
        pts = [(r[2], r[3]) for r in rows if r[0] == k]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "-", lw=1,
                label=f"k={k}")
    ax.set_xlabel("checkpoint time")
    ax.set_ylabel("compensated Hermite sum")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_positions(snapshots, path: str) -> str:
    """Population size over time plus the final position histogram."""
    plt = _pyplot()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    times = [s.time for s in snapshots]
    sizes = [s.positions.size for s in snapshots]
    ax1.plot(times, sizes, "o-", ms=4)
    ax1.set_xlabel("t")
    ax1.set_ylabel("alive particles")
    last = snapshots[-1]
    if last.positions.size:
        ax2.hist(last.positions, bins=max(10, int(np.sqrt(last.positions.size))),
                 color="tab:blue", alpha=0.8)
    ax2.set_xlabel(f"position at t={last.time:g}")
    ax2.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
