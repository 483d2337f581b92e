"""Exponentially compensated Hermite population sums and their limits.

For order index k and drift theta the population functional

    M_t = e^{-(beta(mu-1) - theta^2/2) t}
          * sum over alive, never-absorbed particles of
            e^{theta X} t^{(2k+1)/2} H_{2k+1}(X / sqrt t)

has constant expectation e^{theta x} x^{2k+1} and converges to an almost-sure
limit; the limit is estimated from one trajectory by averaging the tail of
the values along a checkpoint grid r_n = n^{1/kappa}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .special_math import DriftParams, hermite_eval
from .simulator import BatchSnapshot, Snapshot

__all__ = [
    "MartingaleSeries",
    "start_value",
    "martingale_value",
    "martingale_values_batch",
    "checkpoint_times",
    "limit_estimate",
    "series_from_snapshots",
]


def start_value(x: float, k: int, theta: float) -> float:
    """Initial (hence all-time expected) value e^{theta x} x^{2k+1}."""
    if not x > 0.0:
        raise ValueError("x must be > 0")
    return float(np.exp(theta * x) * x ** (2 * k + 1))


def _weights(positions: np.ndarray, t: float, k: int, params: DriftParams) -> np.ndarray:
    comp = np.exp(-params.growth_rate * t)
    return (comp * np.exp(params.theta * positions) * t ** ((2 * k + 1) / 2.0)
            * hermite_eval(2 * k + 1, positions / np.sqrt(t)))


def martingale_value(snapshot: Snapshot, k: int, params: DriftParams) -> float:
    """Compensated Hermite sum over the snapshot's particles (empty sum = 0).

    Rejects t = 0; use start_value for the initial value.
    """
    if not snapshot.time > 0.0:
        raise ValueError("martingale_value needs snapshot.time > 0; use start_value at t = 0")
    if snapshot.positions.size == 0:
        return 0.0
    return float(_weights(snapshot.positions, snapshot.time, k, params).sum())


def martingale_values_batch(snap: BatchSnapshot, k: int, params: DriftParams) -> np.ndarray:
    """Per-replicate martingale values of a batch snapshot."""
    if not snap.time > 0.0:
        raise ValueError("needs time > 0")
    if snap.positions.size == 0:
        return np.zeros(snap.n_replicates)
    w = _weights(snap.positions, snap.time, k, params)
    return np.bincount(snap.replicate, weights=w, minlength=snap.n_replicates)


def checkpoint_times(kappa: float, t_max: float, count: int = 96,
                     t_min: float = 1.0) -> np.ndarray:
    """Subsample of the lattice {n^{1/kappa} : n >= 1}, roughly uniform in
    time from t_min to t_max.

    The full lattice gets impractically dense at large times (its spacing
    shrinks like t^{1-kappa}); a uniform-in-time subsample keeps the schedule
    on the lattice while bounding the number of synchronization barriers.
    """
    if not kappa > 1.0:
        raise ValueError("kappa must be > 1")
    if not t_max > t_min > 0.0:
        raise ValueError("need t_max > t_min > 0")
    targets = np.linspace(t_min, t_max, count)
    n = np.unique(np.maximum(1, np.round(targets ** kappa).astype(np.int64)))
    return n.astype(float) ** (1.0 / kappa)


@dataclass
class MartingaleSeries:
    """Values of one compensated Hermite sum along a checkpoint grid."""

    k: int
    theta: float
    kappa: float
    times: np.ndarray
    values: np.ndarray
    limit_estimate: float | None = None
    dispersion: float | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must align")


def limit_estimate(series: MartingaleSeries, tail_fraction: float = 0.5) -> float:
    """Average of the last tail_fraction of checkpoints; the tail standard
    deviation is stored on the series as the dispersion.

    Tail averaging trades a little bias for variance compared to taking the
    last point alone.
    """
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError("tail_fraction must be in (0, 1]")
    n = series.values.size
    start = n - max(2, int(np.ceil(tail_fraction * n)))
    if start < 0 or n < 2:
        raise ValueError("need at least 2 checkpoints in the tail window")
    tail = series.values[start:]
    series.limit_estimate = float(tail.mean())
    series.dispersion = float(tail.std())
    return series.limit_estimate


def series_from_snapshots(snapshots, k: int, params: DriftParams,
                          kappa: float) -> MartingaleSeries:
    """Build the checkpoint series of one trajectory's snapshots."""
    times = np.array([s.time for s in snapshots])
    values = np.array([martingale_value(s, k, params) for s in snapshots])
    return MartingaleSeries(k=k, theta=params.theta, kappa=kappa,
                            times=times, values=values)
