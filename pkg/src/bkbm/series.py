"""Hermite-series machinery: CDF/PDF expansions of Gaussian windows, their
truncations, and the order-m predictions for normalized killed-population
counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import gammaln

from .errors import RegimeMismatchError
from .special_math import (
    SQRT_2_OVER_PI,
    DriftParams,
    Interval,
    gauss_cdf,
    gauss_pdf,
    hermite_at_zero,
    hermite_eval,
    poly_exp_integral,
)

__all__ = [
    "Regime",
    "ExpansionOrder",
    "ExpansionPrediction",
    "cdf_shift_expansion",
    "cdf_window_expansion",
    "cdf_window_target",
    "pdf_window_expansion",
    "pdf_window_target",
    "predict_expansion",
]


def _inv_factorial(n) -> float:
    # exp(-lgamma(n+1)) stays finite where n! itself would overflow (n >~ 170)
    return float(np.exp(-gammaln(n + 1.0)))


def cdf_shift_expansion(b: float, x: float, rho: float, J: int) -> float:
    """Partial sum Phi(b) - phi(b) * sum_{k=1}^{J} (rho^k / k!) H_{k-1}(b) H_k(x).

    Converges to Phi((b - rho x) / sqrt(1 - rho^2)) as J grows; the tail is
    geometric in rho.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must be in (0, 1), got {rho}")
    if J < 0:
        raise ValueError("J must be >= 0")
    log_rho = math.log(rho)
    total = 0.0
    for k in range(1, J + 1):
        coeff = math.exp(k * log_rho - float(gammaln(k + 1.0)))
        total += coeff * hermite_eval(k - 1, b) * hermite_eval(k, x)
    return gauss_cdf(b) - gauss_pdf(b) * total


def _window_sum(z, y, r, J, z_order_offset):
    """Common body of the window expansions: sum over k of
    H_{2k+offset}(z/sqrt r) H_{2k+1}(y/r^{1/4}) r^{-(2k+1)/4} / (2k+1)!."""
    if not r > 1.0:
        raise ValueError(f"r must be > 1, got {r}")
    if J < 0:
        raise ValueError("J must be >= 0")
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    zs = z / math.sqrt(r)
    ys = y / r ** 0.25
    total = np.zeros(np.broadcast(zs, ys).shape)
    log_r = math.log(r)
    for k in range(J + 1):
        coeff = math.exp(-float(gammaln(2 * k + 2.0)) - (2 * k + 1) / 4.0 * log_r)
        total = total + coeff * hermite_eval(2 * k + z_order_offset, zs) * hermite_eval(2 * k + 1, ys)
    return 2.0 * gauss_pdf(zs) * total


def cdf_window_expansion(z, y, r: float, J: int):
    """Truncated Hermite expansion of the Gaussian CDF window
    Phi((z+y)/sqrt(r - sqrt r)) - Phi((z-y)/sqrt(r - sqrt r)):

        2 phi(z/sqrt r) sum_{k=0}^{J} H_{2k}(z/sqrt r)
            * r^{(2k+1)/4} H_{2k+1}(y/r^{1/4}) / ((2k+1)! r^{(2k+1)/2}).

    Vectorized in z and y.
    """
    out = _window_sum(z, y, r, J, 0)
    return float(out) if out.ndim == 0 else out


def pdf_window_expansion(z, y, r: float, J: int):
    """Truncated Hermite expansion of the Gaussian density window
    sqrt(r/(r - sqrt r)) * (phi((z-y)/sqrt(r - sqrt r))
    - phi((z+y)/sqrt(r - sqrt r))); same series with H_{2k+1}(z/sqrt r)."""
    out = _window_sum(z, y, r, J, 1)
    return float(out) if out.ndim == 0 else out


def cdf_window_target(z, y, r: float):
    """Direct evaluation of the CDF window approximated by
    cdf_window_expansion."""
    if not r > 1.0:
        raise ValueError(f"r must be > 1, got {r}")
    s = math.sqrt(r - math.sqrt(r))
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    out = gauss_cdf((z + y) / s) - gauss_cdf((z - y) / s)
    return float(out) if np.ndim(out) == 0 else out


def pdf_window_target(z, y, r: float):
    """Direct evaluation of the density window approximated by
    pdf_window_expansion."""
    if not r > 1.0:
        raise ValueError(f"r must be > 1, got {r}")
    s = math.sqrt(r - math.sqrt(r))
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    out = math.sqrt(r) / s * (gauss_pdf((z - y) / s) - gauss_pdf((z + y) / s))
    return float(out) if np.ndim(out) == 0 else out


class Regime(Enum):
    """Normalization branch of the count expansion."""

    POSITIVE_DRIFT = "theta>0"
    ZERO_DRIFT_BOUNDED = "theta=0,bounded"
    ZERO_DRIFT_UNBOUNDED = "theta=0,unbounded"

    @classmethod
    def classify(cls, params: DriftParams, interval: Interval) -> "Regime":
        if params.theta > 0.0:
            return cls.POSITIVE_DRIFT
        return cls.ZERO_DRIFT_BOUNDED if interval.is_bounded else cls.ZERO_DRIFT_UNBOUNDED

    @property
    def b_exponent(self) -> float:
        """Power of t in the normalization t^{-b} e^{growth t}."""
        return 0.5 if self is Regime.ZERO_DRIFT_UNBOUNDED else 1.5


@dataclass(frozen=True)
class ExpansionOrder:
    """Truncation bookkeeping for the window expansions.

    The J lower bounds come from the expansions' error analysis:
    J > 2m + (K*kappa + 1)/2 makes the density window's scaled error vanish,
    J > 2m + (K*kappa - 1)/2 the CDF window's.  kappa > 2m + 2 is required
    when the order is used for pathwise validation schedules.
    """

    m: int
    kappa: float = 4.0
    K: float = 1.0
    J: int | None = None
    # default J: smallest integer strictly above the density bound, plus 2
    J_MARGIN = 2

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("m must be >= 0")
        if not self.kappa > 1.0:
            raise ValueError("kappa must be > 1")
        if not self.K > 0.0:
            raise ValueError("K must be > 0")
        if self.J is not None and self.J <= self.cdf_J_bound:
            raise ValueError(
                f"J must exceed 2m + (K*kappa - 1)/2 = {self.cdf_J_bound}, got {self.J}"
            )

    @property
    def cdf_J_bound(self) -> float:
        return 2 * self.m + (self.K * self.kappa - 1.0) / 2.0

    @property
    def pdf_J_bound(self) -> float:
        return 2 * self.m + (self.K * self.kappa + 1.0) / 2.0

    @property
    def default_J(self) -> int:
        return int(math.floor(self.pdf_J_bound)) + 1 + self.J_MARGIN

    def resolve_J(self) -> int:
        return self.J if self.J is not None else self.default_J

    def require_pathwise(self):
        if not self.kappa > 2 * self.m + 2:
            raise ValueError(
                f"pathwise schedules need kappa > 2m + 2 = {2 * self.m + 2}, got kappa={self.kappa}"
            )


@dataclass(frozen=True)
class ExpansionPrediction:
    """Order-m prediction for the normalized count, with per-order pieces.

    ``coefficients[l]`` is the t-free product (sign * sqrt(2/pi) * H-value at
    zero * inner sum over k of M-weights times integrals); the value of order
    l at time t is coefficients[l] / t^l.
    """

    m: int
    regime: Regime
    growth_rate: float
    t: float
    coefficients: tuple = field(default_factory=tuple)

    @property
    def b_exponent(self) -> float:
        return self.regime.b_exponent

    @property
    def terms(self) -> tuple:
        return tuple(c / self.t ** l for l, c in enumerate(self.coefficients))

    @property
    def total(self) -> float:
        return float(sum(self.terms))

    def at(self, t: float) -> float:
        """Evaluate the same coefficients at another time."""
        return float(sum(c / t ** l for l, c in enumerate(self.coefficients)))


def expansion_coefficients(m: int, params: DriftParams, interval: Interval,
                           M, regime: Regime) -> tuple:
    """t-free per-order coefficients of the count expansion.

    For theta > 0 (any interval) and theta = 0 with a bounded interval:
        coeff_l = -sqrt(2/pi) H_{2l+2}(0)
                  * sum_k M[k] / ((2k+1)! (2l-2k+1)!) int_A z^{2l-2k+1} e^{-theta z} dz.
    For theta = 0 with an unbounded interval (a, inf):
        coeff_l = +sqrt(2/pi) H_{2l}(0)
                  * sum_k M[k] / ((2k+1)! (2l-2k)!) a^{2l-2k}.
    """
    if len(M) < m + 1:
        raise ValueError(f"need M[k] for k = 0..{m}, got {len(M)} values")
    coeffs = []
    if regime is Regime.ZERO_DRIFT_UNBOUNDED:
        a = interval.lower
        for l in range(m + 1):
            inner = 0.0
            for k in range(l + 1):
                j = 2 * l - 2 * k
                a_pow = 1.0 if j == 0 else a ** j
                inner += M[k] * _inv_factorial(2 * k + 1) * _inv_factorial(j) * a_pow
            coeffs.append(SQRT_2_OVER_PI * hermite_at_zero(2 * l) * inner)
    else:
        for l in range(m + 1):
            inner = 0.0
            for k in range(l + 1):
                j = 2 * l - 2 * k + 1
                inner += (M[k] * _inv_factorial(2 * k + 1) * _inv_factorial(j)
                          * poly_exp_integral(j, interval, params.theta))
            coeffs.append(-SQRT_2_OVER_PI * hermite_at_zero(2 * l + 2) * inner)
    return tuple(coeffs)


def predict_expansion(m: int, params: DriftParams, interval: Interval, M,
                      t: float, regime: Regime | None = None) -> ExpansionPrediction:
    """Order-m prediction of the normalized count t^{b} e^{-growth t} Z_t(A),
    given the martingale limits (or their expectations) M[0..m].

    The branch is selected from (theta, interval); passing an explicit
    ``regime`` that contradicts them raises RegimeMismatchError.
    """
    if not t > 0.0:
        raise ValueError("t must be > 0")
    inferred = Regime.classify(params, interval)
    if regime is not None and regime is not inferred:
        raise RegimeMismatchError(
            f"interval {interval} with theta={params.theta} belongs to regime "
            f"{inferred.value}, not {regime.value}"
        )
    if inferred is Regime.POSITIVE_DRIFT:
        params.require_expansion_regime()
    coeffs = expansion_coefficients(m, params, interval, M, inferred)
    return ExpansionPrediction(
        m=m, regime=inferred, growth_rate=params.growth_rate, t=t, coefficients=coeffs,
    )
