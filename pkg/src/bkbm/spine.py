"""Size-biased spine tools: the many-to-one estimator for additive
population functionals and an importance-sampling check of the Bessel(3)
endpoint law.

Under the size-biased change of measure one marked line of descent moves as
an unchanged Brownian motion with drift -theta, branches at rate beta * mu,
and draws offspring counts from the size-biased law P(k) = k p_k / mu.  For
functionals of (endpoint, running-minimum sign) the branch structure drops
out of the expectation, so estimators here sample the spine motion alone,
which is exact: the endpoint is Gaussian and the minimum sign is a Brownian
bridge Bernoulli.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeightsError
from .simulator import OffspringLaw
from .special_math import DriftParams, Interval, bessel3_cdf

__all__ = [
    "SpinePath",
    "sample_size_biased",
    "sample_spine_path",
    "killed_endpoint_sample",
    "many_to_one_estimate",
    "ManyToOneResult",
    "bessel3_sample_check",
    "BesselCheckResult",
    "indicator_functional",
    "population_functional",
    "positive_mass_functional",
]


def sample_size_biased(law: OffspringLaw, generator: np.random.Generator) -> int:
    """One draw of the size-biased offspring count: k with probability
    k p_k / mu.  Rejects laws with mean zero."""
    biased = law.size_biased()  # raises for mu = 0
    return int(biased.sample(1, generator)[0])


@dataclass(frozen=True)
class SpinePath:
    """Marked line of descent under the size-biased measure."""

    times: np.ndarray           # requested observation times
    positions: np.ndarray       # spine positions at those times
    split_times: np.ndarray     # branch times, Poisson(beta * mu), increasing
    offspring_counts: np.ndarray  # size-biased counts, all >= 1


def sample_spine_path(x: float, t: float, params: DriftParams, law: OffspringLaw,
                      generator: np.random.Generator, times=None) -> SpinePath:
    """Sample the spine up to time t: motion is Brownian with drift -theta
    (unchanged by the tilting); branch times form a Poisson process of rate
    beta * mu; counts are size-biased."""
    if not x > 0.0 or not t > 0.0:
        raise ValueError("x and t must be > 0")
    if times is None:
        times = np.array([t])
    times = np.sort(np.asarray(times, dtype=float))
    if times.size == 0 or times[0] <= 0.0 or times[-1] > t:
        raise ValueError("times must be positive and <= t")
    dt = np.diff(np.concatenate(([0.0], times)))
    steps = -params.theta * dt + np.sqrt(dt) * generator.standard_normal(times.size)
    positions = x + np.cumsum(steps)
    rate = params.beta * law.mean
    n_splits = generator.poisson(rate * t)
    split_times = np.sort(generator.uniform(0.0, t, n_splits))
    counts = law.size_biased().sample(n_splits, generator) if n_splits else np.empty(0, int)
    return SpinePath(times=times, positions=positions,
                     split_times=split_times, offspring_counts=np.asarray(counts, int))


def killed_endpoint_sample(x: float, t: float, theta: float, n: int, seed: int):
    """Endpoints of n killed drifted Brownian paths: returns (endpoint, alive)
    where alive marks paths whose minimum stayed positive.

    Exact one-segment sampling: endpoint ~ Normal(x - theta t, t); given the
    endpoint, survival is a Brownian bridge Bernoulli.
    """
    if not x > 0.0 or not t > 0.0:
        raise ValueError("x and t must be > 0")
    gen = np.random.default_rng(seed)
    end = x - theta * t + math.sqrt(t) * gen.standard_normal(n)
    u = gen.random(n)
    alive = (end > 0.0) & (u < -np.expm1(-2.0 * x * end / t))
    return end, alive


@dataclass(frozen=True)
class ManyToOneResult:
    estimate: float
    std_error: float
    alive_fraction: float


def many_to_one_estimate(functional, x: float, t: float, params: DriftParams,
                         replicates: int, seed: int) -> ManyToOneResult:
    """Monte Carlo mean of e^{beta (mu-1) t} * functional(endpoint, alive)
    over spine replicates, estimating the expected population sum of the
    functional over alive particles.

    ``functional(endpoint, alive) -> values`` must be vectorized and
    non-negative, and may depend only on the endpoint and the
    minimum-stayed-positive flag (the v1 family).
    """
    if replicates < 2:
        raise ValueError("need >= 2 replicates for a standard error")
    end, alive = killed_endpoint_sample(x, t, params.theta, replicates, seed)
    vals = np.asarray(functional(end, alive), dtype=float)
    scale = math.exp(params.beta * (params.mu - 1.0) * t)
    est = scale * float(vals.mean())
    se = scale * float(vals.std(ddof=1)) / math.sqrt(replicates)
    return ManyToOneResult(estimate=est, std_error=se,
                           alive_fraction=float(alive.mean()))


def indicator_functional(interval: Interval):
    """Gamma = 1{min > 0, endpoint in interval}: estimates the expected count."""
    def f(end, alive):
        return (alive & interval.contains(end)).astype(float)
    return f


def population_functional():
    """Gamma = 1 ignoring absorption: estimates the total population mean."""
    def f(end, alive):
        return np.ones_like(end)
    return f


def positive_mass_functional(theta: float):
    """Gamma = 1{min > 0} * endpoint * e^{theta endpoint}: the conserved
    positive-part mass, with expectation e^{(beta(mu-1)-theta^2/2) t} x e^{theta x}."""
    def f(end, alive):
        return np.where(alive, end * np.exp(theta * end), 0.0)
    return f


@dataclass(frozen=True)
class BesselCheckResult:
    statistic: float
    threshold: float
    n_eff: float
    alive_fraction: float
    passed: bool


def bessel3_sample_check(x: float, t: float, replicates: int, seed: int,
                         theta: float = 0.0,
                         threshold_coeff: float = 2.0) -> BesselCheckResult:
    """Weighted one-sample Kolmogorov-Smirnov check that killed endpoints,
    reweighted by B e^{theta (B - x) + theta^2 t / 2} / x, follow the
    Bessel(3) transition law.

    Self-normalized importance sampling; the threshold scales like
    threshold_coeff / sqrt(effective sample size).  Raises
    DegenerateWeightsError when every path is absorbed.
    """
    end, alive = killed_endpoint_sample(x, t, theta, replicates, seed)
    e = end[alive]
    if e.size == 0:
        raise DegenerateWeightsError(
            f"all {replicates} paths absorbed for x={x}, t={t}, theta={theta}"
        )
    w = e * np.exp(theta * (e - x) + 0.5 * theta ** 2 * t) / x
    order = np.argsort(e)
    e, w = e[order], w[order]
    cum = np.cumsum(w) / w.sum()
    ref = bessel3_cdf(t, x, e)
    upper = np.abs(cum - ref)
    lower = np.abs(np.concatenate(([0.0], cum[:-1])) - ref)
    stat = float(np.max(np.maximum(upper, lower)))
    n_eff = float(w.sum() ** 2 / (w ** 2).sum())
    threshold = threshold_coeff / math.sqrt(n_eff)
    return BesselCheckResult(statistic=stat, threshold=threshold, n_eff=n_eff,
                             alive_fraction=float(alive.mean()),
                             passed=stat < threshold)
