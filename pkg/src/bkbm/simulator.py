"""Event-driven Monte Carlo simulation of branching Brownian motion with
drift -theta, exponential(beta) lifetimes, a finite-support offspring law,
and absorption at the origin.

Absorption between event times is resolved exactly through the Brownian
bridge minimum law (no time-discretization bias): a particle segment from x0
to x1 over dt stays positive with probability 1 - exp(-2 x0 x1 / dt).
Observation times act as global synchronization barriers; between barriers
each particle advances event-to-event (death or barrier, whichever first).

The engine is vectorized across particles and across independent replicates:
a batch run carries a replicate tag per particle, and every particle owns a
counter-based random stream (see rng), so results do not depend on traversal
order, batch composition, or worker partitioning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from . import rng
from .errors import PopulationCapExceeded
from .special_math import DriftParams, Interval

__all__ = [
    "OffspringLaw",
    "SimConfig",
    "Snapshot",
    "BatchSnapshot",
    "BatchResult",
    "bridge_survival_prob",
    "simulate",
    "simulate_batch",
    "count_in",
]

_U64 = np.uint64


@dataclass(frozen=True)
class OffspringLaw:
    """Finite-support offspring distribution: probabilities[k] = P(k children).

    Finite support makes every moment condition automatic.
    """

    probabilities: tuple

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("offspring law needs a 1-d probability vector")
        if np.any(p < 0.0):
            raise ValueError("offspring probabilities must be >= 0")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"offspring probabilities must sum to 1, got {p.sum()!r}")
        object.__setattr__(self, "probabilities", tuple(float(v) for v in p))

    @classmethod
    def binary(cls) -> "OffspringLaw":
        return cls((0.0, 0.0, 1.0))

    @classmethod
    def parse(cls, text: str) -> "OffspringLaw":
        """'binary' or comma-separated probabilities 'p0,p1,...'."""
        if text.strip().lower() == "binary":
            return cls.binary()
        return cls(tuple(float(v) for v in text.split(",")))

    @property
    def mean(self) -> float:
        p = np.asarray(self.probabilities)
        return float(np.arange(p.size) @ p)

    @property
    def cdf(self) -> np.ndarray:
        return np.cumsum(np.asarray(self.probabilities))

    def size_biased(self) -> "OffspringLaw":
        """Law with P(k) proportional to k * p_k (kills k = 0)."""
        mu = self.mean
        if mu <= 0.0:
            raise ValueError("size-biasing needs a law with positive mean")
        p = np.arange(len(self.probabilities)) * np.asarray(self.probabilities) / mu
        return OffspringLaw(tuple(p))

    def sample(self, n: int, generator: np.random.Generator) -> np.ndarray:
        """n iid draws using a numpy Generator (test/utility path)."""
        return np.searchsorted(self.cdf, generator.random(n), side="right")


@dataclass(frozen=True)
class SimConfig:
    params: DriftParams
    law: OffspringLaw
    start_x: float
    schedule: tuple
    max_population: int = 10_000_000
    seed: int = 0

    def __post_init__(self):
        if not self.start_x > 0.0:
            raise ValueError("start_x must be > 0")
        sched = tuple(float(t) for t in self.schedule)
        if not sched:
            raise ValueError("schedule must be nonempty")
        if sched[0] <= 0.0 or any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValueError("schedule must be strictly increasing and positive")
        object.__setattr__(self, "schedule", sched)
        if self.max_population < 1:
            raise ValueError("max_population must be >= 1")


@dataclass(frozen=True)
class Snapshot:
    """Alive, never-absorbed particles of one replicate at one time."""

    time: float
    positions: np.ndarray
    total_ever_branched: int
    absorbed_count: int


@dataclass(frozen=True)
class BatchSnapshot:
    """One observation time of a replicate batch; particles carry replicate
    tags so per-replicate statistics reduce with bincount."""

    time: float
    positions: np.ndarray
    replicate: np.ndarray
    n_replicates: int
    branched: np.ndarray  # cumulative branch events per replicate
    absorbed: np.ndarray  # cumulative absorptions per replicate

    def counts(self) -> np.ndarray:
        return np.bincount(self.replicate, minlength=self.n_replicates)

    def counts_in(self, interval: Interval) -> np.ndarray:
        mask = interval.contains(self.positions)
        return np.bincount(self.replicate[mask], minlength=self.n_replicates)

    def snapshot_for(self, r: int) -> Snapshot:
        sel = self.replicate == r
        return Snapshot(
            time=self.time,
            positions=self.positions[sel].copy(),
            total_ever_branched=int(self.branched[r]),
            absorbed_count=int(self.absorbed[r]),
        )


@dataclass
class BatchResult:
    snapshots: list = field(default_factory=list)
    n_replicates: int = 0


def bridge_survival_prob(x0, x1, dt):
    """Probability that a Brownian bridge from x0 to x1 over duration dt
    stays strictly positive: 1 - exp(-2 x0 x1 / dt).  Vectorized."""
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    dt = np.asarray(dt, dtype=float)
    if np.any(x0 <= 0.0) or np.any(x1 <= 0.0) or np.any(dt <= 0.0):
        raise ValueError("bridge_survival_prob needs x0 > 0, x1 > 0, dt > 0")
    out = -np.expm1(-2.0 * x0 * x1 / dt)
    return float(out) if out.ndim == 0 else out


class _Population:
    """Mutable struct-of-arrays for the active particles."""

    __slots__ = ("pos", "key", "ctr", "tcur", "tdeath", "rep")

    def __init__(self, pos, key, ctr, tcur, tdeath, rep):
        self.pos, self.key, self.ctr = pos, key, ctr
        self.tcur, self.tdeath, self.rep = tcur, tdeath, rep

    @property
    def size(self):
        return self.pos.size

    def select(self, mask):
        return _Population(self.pos[mask], self.key[mask], self.ctr[mask],
                           self.tcur[mask], self.tdeath[mask], self.rep[mask])


def _spawn_children(parents: _Population, newpos, law_cdf, beta):
    """Replace dying parents by their children at the death position.

    Parents consume one draw for the offspring count and one raw stream value
    per child key; each child draws its own lifetime at counter 0.
    """
    u_off = rng.uniform01(parents.key, parents.ctr)
    kcount = np.searchsorted(law_cdf, u_off, side="right")
    total = int(kcount.sum())
    if total == 0:
        return _empty_population()
    pr = np.repeat(np.arange(parents.size), kcount)
    starts = np.cumsum(kcount, dtype=np.int64) - kcount
    slot = np.arange(total, dtype=np.uint64) - np.repeat(starts, kcount).astype(np.uint64)
    child_key = rng.raw64(parents.key[pr], (parents.ctr + _U64(1))[pr] + slot)
    child_ctr = np.zeros(total, dtype=_U64)
    lifetime = rng.exponential(child_key, child_ctr, beta)
    child_ctr += _U64(1)
    return _Population(
        pos=newpos[pr].copy(),
        key=child_key,
        ctr=child_ctr,
        tcur=parents.tdeath[pr].copy(),
        tdeath=parents.tdeath[pr] + lifetime,
        rep=parents.rep[pr].copy(),
    )


def _empty_population() -> "_Population":
    return _Population(
        np.empty(0), np.empty(0, _U64), np.empty(0, _U64),
        np.empty(0), np.empty(0), np.empty(0, np.int64),
    )


def simulate_batch(config: SimConfig, replicates: int, *, absorb: bool = True,
                   t0: float = 0.0, initial_positions=None,
                   replicate_offset: int = 0, callback=None,
                   keep: bool = True) -> BatchResult:
    """Run ``replicates`` independent copies of the process in one vectorized
    pass, observing at config.schedule.

    initial_positions: start every replicate from this position vector
        instead of a single particle at config.start_x (used to continue
        frozen states; t0 is the corresponding start time).
    replicate_offset: global index of the first replicate, so a chunked run
        reproduces the unchunked batch draw-for-draw.
    callback: called with each BatchSnapshot as it completes; when ``keep`` is
        false snapshots are not retained (streaming reduction).
    absorb: disable only for tests of the pure branching law (barrier
        removed; positions may then be <= 0).

    Raises PopulationCapExceeded (with completed snapshots attached) when any
    single replicate's alive count would pass config.max_population.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    theta, beta = config.params.theta, config.params.beta
    law_cdf = config.law.cdf
    master = rng.master_key(config.seed)
    rep_keys = rng.derive_keys(master, np.arange(replicate_offset + 1,
                                                 replicate_offset + replicates + 1))
    if initial_positions is None:
        init = np.array([config.start_x], dtype=float)
    else:
        init = np.asarray(initial_positions, dtype=float)
        if init.size == 0 or np.any(init <= 0.0):
            raise ValueError("initial positions must be positive and nonempty")
    n0 = init.size
    if t0 >= config.schedule[0]:
        raise ValueError("t0 must precede the first schedule time")

    # root particles: replicate r, particle i gets stream raw64(rep_key_r, 1+i)
    rep = np.repeat(np.arange(replicates, dtype=np.int64), n0)
    key = rng.derive_keys(np.repeat(rep_keys, n0), np.tile(np.arange(1, n0 + 1), replicates))
    ctr = np.zeros(replicates * n0, dtype=_U64)
    pos = np.tile(init, replicates)
    tcur = np.full(pos.size, float(t0))
    tdeath = tcur + rng.exponential(key, ctr, beta)
    ctr = ctr + _U64(1)
    alive = _Population(pos, key, ctr, tcur, tdeath, rep)

    branched = np.zeros(replicates, dtype=np.int64)
    absorbed = np.zeros(replicates, dtype=np.int64)
    result = BatchResult(n_replicates=replicates)

    for t_bar in config.schedule:
        parked = []
        parked_counts = np.zeros(replicates, dtype=np.int64)
        active = alive
        while active.size:
            nxt = np.minimum(active.tdeath, t_bar)
            dt = nxt - active.tcur
            z = ndtri(rng.uniform01(active.key, active.ctr))
            active.ctr = active.ctr + _U64(1)
            u_bridge = rng.uniform01(active.key, active.ctr)
            active.ctr = active.ctr + _U64(1)
            moved = dt > 0.0
            newpos = np.where(moved, active.pos - theta * dt + np.sqrt(np.maximum(dt, 0.0)) * z,
                              active.pos)
            if absorb:
                with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                    p_surv = -np.expm1(-2.0 * active.pos * newpos / dt)
                ok = np.where(moved, (newpos > 0.0) & (u_bridge < p_surv), True)
                if not ok.all():
                    absorbed += np.bincount(active.rep[~ok], minlength=replicates)
            else:
                ok = np.ones(active.size, dtype=bool)
            dies = ok & (active.tdeath <= t_bar)
            parks = ok & ~dies
            if parks.any():
                kept = active.select(parks)
                kept.pos = newpos[parks]
                parked.append(kept)
                parked_counts += np.bincount(kept.rep, minlength=replicates)
            if dies.any():
                parents = active.select(dies)
                branched += np.bincount(parents.rep, minlength=replicates)
                active = _spawn_children(parents, newpos[dies], law_cdf, beta)
            else:
                active = _empty_population()
            over = parked_counts + np.bincount(active.rep, minlength=replicates) > config.max_population
            if over.any():
                raise PopulationCapExceeded(
                    f"alive count passed max_population={config.max_population} "
                    f"before t={t_bar}",
                    time=t_bar,
                    replicate=int(np.flatnonzero(over)[0]) + replicate_offset,
                    partial=result.snapshots,
                )
        if parked:
            all_pos = np.concatenate([p.pos for p in parked])
            all_key = np.concatenate([p.key for p in parked])
            all_ctr = np.concatenate([p.ctr for p in parked])
            all_td = np.concatenate([p.tdeath for p in parked])
            all_rep = np.concatenate([p.rep for p in parked])
        else:
            all_pos = np.empty(0)
            all_key = np.empty(0, _U64)
            all_ctr = np.empty(0, _U64)
            all_td = np.empty(0)
            all_rep = np.empty(0, np.int64)
        snap = BatchSnapshot(
            time=float(t_bar),
            positions=all_pos.copy(),
            replicate=all_rep.copy(),
            n_replicates=replicates,
            branched=branched.copy(),
            absorbed=absorbed.copy(),
        )
        if callback is not None:
            callback(snap)
        if keep:
            result.snapshots.append(snap)
        alive = _Population(all_pos, all_key, all_ctr,
                            np.full(all_pos.size, float(t_bar)), all_td, all_rep)
    return result


def simulate(config: SimConfig, *, absorb: bool = True) -> list:
    """Exact-law simulation of a single replicate; one Snapshot per schedule
    time, fully reproducible from config.seed."""
    try:
        batch = simulate_batch(config, 1, absorb=absorb)
    except PopulationCapExceeded as exc:
        exc.partial = [bs.snapshot_for(0) for bs in exc.partial]
        raise
    return [bs.snapshot_for(0) for bs in batch.snapshots]


def count_in(snapshot: Snapshot, interval: Interval) -> int:
    """Number of snapshot positions in (lower, upper]."""
    if snapshot.positions.size == 0:
        return 0
    return int(np.count_nonzero(interval.contains(snapshot.positions)))
