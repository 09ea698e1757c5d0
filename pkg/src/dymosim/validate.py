"""Numerical validation of the estimator error analysis.

Replicates the reference numerical study: 500 Monte-Carlo runs of one-step
(fixed-rate order statistics) and two-step estimation of low quantiles of
a 10^6-member uniform population at a budget of 400 expected reports, plus
a grid minimization of the two-step error expression and the analytic
crossover between the two error bounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimation import (
    SampleSet,
    empirical_quantile,
    optimal_two_step_plan,
    two_step_bound,
    two_step_error_expression,
)

__all__ = [
    "PropertyResult",
    "Fig3Result",
    "one_step_trial",
    "two_step_trial",
    "fig3_replication",
    "grid_minimum",
    "crossover_holds",
    "validate_estimators",
]


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class Fig3Result:
    p: float
    r: float
    one_step_fractions: np.ndarray
    two_step_fractions: np.ndarray

    @property
    def one_step_se(self) -> float:
        return float(np.std(self.one_step_fractions, ddof=1))

    @property
    def two_step_se(self) -> float:
        return float(np.std(self.two_step_fractions, ddof=1))


def _sample_ranks(m: int, q: float, rng: np.random.Generator) -> np.ndarray:
    """Ranks of the members picked by per-member Bernoulli(q) sampling."""
    y = rng.binomial(m, min(1.0, q))
    if y == 0:
        return np.empty(0, dtype=np.int64)
    return rng.choice(m, size=y, replace=False)


def _population_fraction(pop_sorted: np.ndarray, x: float) -> float:
    """Population CDF at x: fraction of members at or below x."""
    return float(np.searchsorted(pop_sorted, x, side="right")) / pop_sorted.size


def one_step_trial(pop_sorted: np.ndarray, p: float, r: float, rng: np.random.Generator) -> float:
    """One fixed-rate sampling pass; returns the realized population
    fraction below the estimated quantile."""
    m = pop_sorted.size
    ranks = _sample_ranks(m, r / m, rng)
    if ranks.size == 0:
        return 1.0
    est = empirical_quantile(SampleSet(pop_sorted[ranks]), p)
    return _population_fraction(pop_sorted, est)


def two_step_trial(pop_sorted: np.ndarray, p: float, r: float, rng: np.random.Generator) -> float:
    """One optimally split two-group pass on the same population."""
    m = pop_sorted.size
    plan = optimal_two_step_plan(p, r)
    ranks1 = _sample_ranks(m, plan.r1 / m, rng)
    if ranks1.size == 0:
        return 1.0
    x1 = empirical_quantile(SampleSet(pop_sorted[ranks1]), plan.p1)
    k = int(np.searchsorted(pop_sorted, x1, side="right"))
    if k == 0:
        return 0.0
    ranks2 = _sample_ranks(k, plan.r2 / (plan.p1 * m), rng)
    if ranks2.size == 0:
        return _population_fraction(pop_sorted, x1)
    x2 = empirical_quantile(SampleSet(pop_sorted[ranks2]), plan.p2)
    return _population_fraction(pop_sorted, x2)


def fig3_replication(
    p: float,
    r: float = 400.0,
    runs: int = 500,
    population: int = 10**6,
    seed: int = 2024,
) -> Fig3Result:
    """Monte-Carlo comparison of the one-step and two-step estimators."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, int(1 / p)]))
    pop_sorted = np.sort(rng.uniform(0.0, 1.0, size=population))
    one = np.array([one_step_trial(pop_sorted, p, r, rng) for _ in range(runs)])
    two = np.array([two_step_trial(pop_sorted, p, r, rng) for _ in range(runs)])
    return Fig3Result(p=p, r=r, one_step_fractions=one, two_step_fractions=two)


def grid_minimum(p: float, r: float, n: int = 200) -> tuple[float, float, float, float]:
    """Argmin of the two-step error expression on an n x n interior grid.

    Returns (p1_star, r1_star, p1_pitch, r1_pitch).
    """
    p1 = np.linspace(p, 1.0, n + 2)[1:-1]
    r1 = np.linspace(0.0, r, n + 2)[1:-1]
    p1g, r1g = np.meshgrid(p1, r1, indexing="ij")
    err = 3.0 * p * (
        np.sqrt((1.0 / p1g - 1.0) / r1g) + np.sqrt((p1g / p - 1.0) / (r - r1g))
    )
    flat = int(np.argmin(err))
    i, j = np.unravel_index(flat, err.shape)
    return float(p1[i]), float(r1[j]), float(p1[1] - p1[0]), float(r1[1] - r1[0])


def crossover_holds(r: float = 400.0, n_points: int = 400) -> bool:
    """Two-step bound below the 3-sigma one-step bound exactly for
    p <= 1/49 (equality at the boundary within float tolerance)."""
    boundary = 1.0 / 49.0
    ps_below = np.geomspace(1e-6, boundary * (1 - 1e-9), n_points)
    ps_above = np.linspace(boundary * (1 + 1e-9), 0.5, n_points)
    for p in ps_below:
        if two_step_bound(p, r) > 3.0 * math.sqrt(p * (1 - p) / r) * (1 + 1e-12):
            return False
    for p in ps_above:
        if two_step_bound(p, r) <= 3.0 * math.sqrt(p * (1 - p) / r) * (1 - 1e-12):
            return False
    at_boundary = two_step_bound(boundary, r)
    reference = 3.0 * math.sqrt(boundary * (1 - boundary) / r)
    return math.isclose(at_boundary, reference, rel_tol=1e-9)


def validate_estimators(seed: int = 2024, runs: int = 500) -> list[PropertyResult]:
    """Run every estimator validation property; returns one result each."""
    results: list[PropertyResult] = []

    for p in (0.01, 0.001):
        fig = fig3_replication(p, runs=runs, seed=seed)
        results.append(PropertyResult(
            name=f"two-step std error below one-step at p={p}",
            passed=fig.two_step_se < fig.one_step_se,
            detail=f"two-step {fig.two_step_se:.6f} vs one-step {fig.one_step_se:.6f}",
        ))
        bound = two_step_bound(p, 400.0)
        coverage = float(np.mean(np.abs(fig.two_step_fractions - p) <= bound))
        results.append(PropertyResult(
            name=f"two-step bound coverage >= 99% at p={p}",
            passed=coverage >= 0.99,
            detail=f"coverage {coverage:.4f} at bound {bound:.6f}",
        ))
        if p == 0.01:
            asymptotic = math.sqrt(p * (1 - p) / 400.0)
            ratio = fig.one_step_se / asymptotic
            results.append(PropertyResult(
                name="one-step std error within 20% of sqrt(p(1-p)/r) at p=0.01",
                passed=0.8 <= ratio <= 1.2,
                detail=f"ratio {ratio:.4f}",
            ))

    ok = True
    details = []
    for p in (1e-2, 1e-3, 1e-4):
        for r in (100.0, 400.0, 1000.0):
            p1s, r1s, dp, dr = grid_minimum(p, r)
            hit = abs(p1s - math.sqrt(p)) <= dp and abs(r1s - r / 2.0) <= dr
            ok = ok and hit
            details.append(f"p={p} r={r}: ({p1s:.5f},{r1s:.1f})")
    results.append(PropertyResult(
        name="grid minimum of the two-step error at (sqrt(p), r/2)",
        passed=ok,
        detail="; ".join(details),
    ))

    results.append(PropertyResult(
        name="two-step bound crosses the one-step bound exactly at p=1/49",
        passed=crossover_holds(),
        detail="checked below, above and at the boundary",
    ))
    return results
