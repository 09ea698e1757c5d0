"""Low-tail quantile estimators and their error bounds.

Everything in this module is a pure function of its inputs: no simulation
state, no RNG, safe to call concurrently. SNR samples are plain dB values,
optionally weighted so that exponentially smoothed history can be folded
into a single sample set without keeping every past interval around.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "InsufficientReports",
    "SampleSet",
    "QuantileQuery",
    "TwoStepPlan",
    "IterativeState",
    "FractionEstimate",
    "empirical_quantile",
    "quantile_variance",
    "optimal_two_step_plan",
    "two_step_error_expression",
    "two_step_bound",
    "iterative_bound",
    "estimate_subpopulation_fraction",
    "exp_smooth",
]

# relative slack used when comparing cumulative weight against p * total,
# so that float dust in the weights cannot skip an exactly-crossing sample
_CDF_REL_TOL = 1e-12


class InsufficientReports(ValueError):
    """Raised when a quantile is requested from an empty sample set."""


@dataclass(frozen=True)
class SampleSet:
    """A set of SNR samples (dB), each carrying a positive weight.

    Unweighted reports use weight 1.0; merging interval t-1 history at
    weight (1 - alpha) with fresh interval t reports at weight alpha gives
    the smoothed sample set without unbounded history.
    """

    values: np.ndarray
    weights: np.ndarray

    def __init__(self, values: Sequence[float], weights: Sequence[float] | None = None):
        values = np.asarray(values, dtype=float)
        if weights is None:
            weights = np.ones_like(values)
        else:
            weights = np.asarray(weights, dtype=float)
        if values.shape != weights.shape or values.ndim != 1:
            raise ValueError("values and weights must be 1-D arrays of equal length")
        if values.size and not np.all(np.isfinite(values)):
            raise ValueError("sample values must be finite")
        if values.size and not np.all(weights > 0):
            raise ValueError("sample weights must be strictly positive")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True)
class QuantileQuery:
    """A tail-quantile request: fraction p and expected report budget r."""

    p: float
    r: float

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0):
            raise ValueError(f"p must be in (0, 1], got {self.p}")
        if not self.r > 0:
            raise ValueError(f"report budget r must be positive, got {self.r}")


@dataclass(frozen=True)
class TwoStepPlan:
    """Per-step fractions and budgets of a two-group estimation pass."""

    p1: float
    p2: float
    r1: float
    r2: float

    def __post_init__(self):
        for name, frac in (("p1", self.p1), ("p2", self.p2)):
            if not (0.0 < frac < 1.0):
                raise ValueError(f"{name} must be in (0, 1), got {frac}")
        if self.r1 <= 0 or self.r2 <= 0:
            raise ValueError("step budgets must be positive")

    @property
    def p(self) -> float:
        return self.p1 * self.p2

    @property
    def r(self) -> float:
        return self.r1 + self.r2

    def matches(self, p: float, r: float, rel_tol: float = 1e-12) -> bool:
        """Check the plan invariants p1*p2 = p and r1 + r2 = r."""
        return (
            math.isclose(self.p, p, rel_tol=rel_tol)
            and math.isclose(self.r, r, rel_tol=rel_tol)
        )


@dataclass
class IterativeState:
    """Mutable state carried between reporting intervals by the iterative
    estimator: threshold estimate, monitored-band parameters, population
    estimate and the smoothing factor."""

    x_hat: float
    L: float
    p_L_hat: float
    m_hat: float
    alpha: float = 0.5

    def __post_init__(self):
        if self.L < 0:
            raise ValueError("Lipschitz bound L must be nonnegative")
        if not (0.0 <= self.p_L_hat <= 1.0):
            raise ValueError("p_L_hat must lie in [0, 1]")
        if self.m_hat < 0:
            raise ValueError("m_hat must be nonnegative")
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must be in (0, 1]")


class FractionEstimate(NamedTuple):
    estimate: float
    variance: float


def empirical_quantile(samples: SampleSet, p: float) -> float:
    """Weighted empirical quantile, inf-style.

    Returns the smallest sample value x whose weighted empirical CDF
    satisfies F(x) >= p. Ties are resolved deterministically by a stable
    sort of equal values.

    Parameters
    ----------
    samples : SampleSet
        Nonempty weighted sample set.
    p : float
        Target fraction in (0, 1].

    Raises
    ------
    InsufficientReports
        If the sample set is empty.
    """
    if len(samples) == 0:
        raise InsufficientReports("cannot take a quantile of an empty sample set")
    if not (0.0 < p <= 1.0):
        raise ValueError(f"p must be in (0, 1], got {p}")
    order = np.argsort(samples.values, kind="stable")
    values = samples.values[order]
    cum = np.cumsum(samples.weights[order])
    total = cum[-1]
    threshold = p * total - _CDF_REL_TOL * total
    idx = int(np.searchsorted(cum, threshold, side="left"))
    idx = min(idx, values.size - 1)
    return float(values[idx])


def quantile_variance(p: float, r: float) -> float:
    """Asymptotic variance p(1-p)/r of the realized fraction below the
    empirical p-quantile taken from r samples."""
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must be in (0, 1), got {p}")
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    return p * (1.0 - p) / r


def optimal_two_step_plan(p: float, r: float) -> TwoStepPlan:
    """Error-minimizing split of a two-group pass: equal fractions sqrt(p)
    and an even budget split r/2 per step."""
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must be in (0, 1), got {p}")
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    sp = math.sqrt(p)
    return TwoStepPlan(p1=sp, p2=sp, r1=r / 2.0, r2=r / 2.0)


def two_step_error_expression(p1: float, r1: float, p: float, r: float) -> float:
    """Three-sigma error bound of a two-group pass with split (p1, r1).

    Evaluates 3p * [sqrt((1/p1 - 1)/r1) + sqrt((p1/p - 1)/(r - r1))],
    the quantity whose minimum over (p1, r1) is attained at the optimal
    plan (sqrt(p), r/2).
    """
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must be in (0, 1), got {p}")
    if not (p < p1 < 1.0):
        raise ValueError(f"p1 must be in (p, 1), got p1={p1} with p={p}")
    if not (0.0 < r1 < r):
        raise ValueError(f"r1 must be in (0, r), got r1={r1} with r={r}")
    first = math.sqrt((1.0 / p1 - 1.0) / r1)
    second = math.sqrt((p1 / p - 1.0) / (r - r1))
    return 3.0 * p * (first + second)


def two_step_bound(p: float, r: float) -> float:
    """Error bound of the optimally split two-group pass:
    6*sqrt(2) * sqrt(p*sqrt(p)*(1 - sqrt(p)) / r)."""
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must be in (0, 1), got {p}")
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    sp = math.sqrt(p)
    return 6.0 * math.sqrt(2.0) * math.sqrt(p * sp * (1.0 - sp) / r)


def iterative_bound(p_L: float, r: float) -> float:
    """Error bound 5 * p_L / sqrt(r) of one iterative-estimation interval.

    Only applicable for an expected sample size r >= 100 (and, caller
    asserted, p <= 0.7 * p_L); outside that regime the normal
    approximation behind the bound does not hold.
    """
    if not (0.0 < p_L <= 1.0):
        raise ValueError(f"p_L must be in (0, 1], got {p_L}")
    if r < 100:
        raise ValueError(
            "iterative error bound requires an expected sample size r >= 100; "
            f"got r={r}"
        )
    return 5.0 * p_L / math.sqrt(r)


def estimate_subpopulation_fraction(reports: float, m: float, q: float) -> FractionEstimate:
    """Inverse-probability estimate of a subpopulation fraction.

    With Y reports received from a subpopulation sampled at rate q out of
    m members overall, Y/(m*q) is unbiased for the fraction; the variance
    (est/m) * (1-q)/q is evaluated at the estimate and vanishes in the
    census case q = 1.
    """
    if m <= 0:
        raise ValueError(f"population size m must be positive, got {m}")
    if not (0.0 < q <= 1.0):
        raise ValueError(f"report rate q must be in (0, 1], got {q}")
    if reports < 0:
        raise ValueError(f"report count must be nonnegative, got {reports}")
    estimate = reports / (m * q)
    variance = (estimate / m) * (1.0 - q) / q
    return FractionEstimate(estimate=estimate, variance=variance)


def exp_smooth(previous: float, fresh: float, alpha: float) -> float:
    """Exponential smoothing: alpha weights the fresh value, (1 - alpha)
    the accumulated past. With alpha = 0.5 a sample seven intervals old
    retains less than 1% weight."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    return alpha * fresh + (1.0 - alpha) * previous
