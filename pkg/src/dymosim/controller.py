"""Per-interval feedback controllers and the MCS mapping.

Schemes implemented:

    dymo               adaptive two-group monitoring with an estimated
                       population size and a moving below-threshold band
    order_stats_hist   fixed-rate random sampling, exponentially smoothed
                       report histogram
    order_stats_nohist fixed-rate random sampling, current interval only
    optimal            oracle quantile over all active UEs
    uniform            static threshold from full grid knowledge

All controllers speak quantized SNR ticks (dB * 10) internally and share
the same lower-edge histogram quantile, so quantization treats every
scheme identically.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, NamedTuple, Sequence

import numpy as np
from scipy.special import ndtr

from .estimation import estimate_subpopulation_fraction, exp_smooth
from .snr import (
    DEFAULT_RANGE_TICKS,
    SnrHistogram,
    merge_smoothed,
    quantile_tick,
    quantize,
    tick_to_db,
)

__all__ = [
    "GroupInstruction",
    "QosReport",
    "ue_decide",
    "dymo_bootstrap",
    "DymoController",
    "OrderStatisticsController",
    "UniformController",
    "optimal_step",
    "McsTable",
    "McsChoice",
    "mcs_from_threshold",
    "default_mcs_table",
    "load_mcs_table",
    "dump_instruction_trace",
    "SCHEME_NAMES",
]

SCHEME_NAMES = ("dymo", "optimal", "uniform", "order_stats_hist", "order_stats_nohist")


@dataclass(frozen=True)
class QosReport:
    """One UE's quantized SNR report for one reporting interval."""

    snr_tick: int
    interval: int

    @property
    def snr_db(self) -> float:
        return tick_to_db(self.snr_tick)


@dataclass(frozen=True)
class GroupInstruction:
    """Broadcast directive: ordered half-open SNR ranges with per-range
    report probabilities, jointly covering the whole SNR axis.

    Ranges are (lower_tick, upper_tick, probability) with None for an open
    end; membership is lower <= tick < upper.
    """

    ranges: tuple[tuple[int | None, int | None, float], ...]
    interval: int = 0

    def __post_init__(self):
        if not self.ranges:
            raise ValueError("instruction must contain at least one range")
        if self.ranges[0][0] is not None or self.ranges[-1][1] is not None:
            raise ValueError("instruction ranges must cover the whole SNR axis")
        for (lo, hi, prob) in self.ranges:
            if not (0.0 <= prob <= 1.0):
                raise ValueError(f"report probability {prob} outside [0, 1]")
            if lo is not None and hi is not None and hi <= lo:
                raise ValueError("empty instruction range")
        for (_, hi, _), (lo, _, _) in zip(self.ranges, self.ranges[1:]):
            if hi != lo:
                raise ValueError("instruction ranges must be contiguous and disjoint")

    def ranges_db(self) -> list[tuple[float, float, float]]:
        out = []
        for lo, hi, prob in self.ranges:
            out.append((
                -math.inf if lo is None else tick_to_db(lo),
                math.inf if hi is None else tick_to_db(hi),
                prob,
            ))
        return out

    def probability_for_tick(self, tick: int) -> float:
        for lo, hi, prob in self.ranges:
            if (lo is None or tick >= lo) and (hi is None or tick < hi):
                return prob
        raise RuntimeError(f"SNR tick {tick} matched no instruction range")

    def probabilities(self, ticks: np.ndarray) -> np.ndarray:
        """Vectorized per-UE report probability lookup."""
        bounds = np.asarray([hi for (_, hi, _) in self.ranges[:-1]], dtype=np.int64)
        probs = np.asarray([prob for (_, _, prob) in self.ranges], dtype=float)
        idx = np.searchsorted(bounds, np.asarray(ticks, dtype=np.int64), side="right")
        return probs[idx]


def ue_decide(instruction: GroupInstruction, h_db: float, rng: np.random.Generator) -> QosReport | None:
    """One UE's report decision for its current individual SNR value."""
    tick = quantize(h_db)
    prob = instruction.probability_for_tick(tick)
    if rng.random() < prob:
        return QosReport(snr_tick=tick, interval=instruction.interval)
    return None


def dymo_bootstrap(p: float, r_per_sec: float, m_guess: float, interval_seconds: float = 12.0) -> GroupInstruction:
    """First-interval instruction: a single all-SNR group reporting at
    min(1, r_interval / m_guess), used to seed the SNR distribution and
    the population estimate."""
    if m_guess <= 0:
        raise ValueError("m_guess must be positive")
    r_interval = r_per_sec * interval_seconds
    q0 = min(1.0, r_interval / m_guess)
    return GroupInstruction(ranges=((None, None, q0),), interval=0)


# ---------------------------------------------------------------------------
# DyMo controller
# ---------------------------------------------------------------------------

@dataclass
class DymoIntervalDiag:
    interval: int
    y_below: int
    y_above: int
    starved: bool
    shock: bool
    boundary_tick: int | None
    p_l_hat: float
    m_hat: float
    x_hat_tick: int | None = None
    q_below: float = 0.0


class DymoController:
    """Iterative threshold estimation with stochastic group instructions.

    Each interval the controller
      1. splits the report budget evenly across the below/above-boundary
         groups (r1 = r2 = r_interval / 2),
      2. updates the population estimate from both groups' inverse
         probability counts (exp-smoothed),
      3. updates the below-boundary fraction estimate from the below count,
      4. takes the p/p_L_hat quantile of the smoothed below-boundary report
         histogram as the raw threshold,
      5. exp-smooths the threshold and the histograms,
      6. sets the next boundary at s + L, widened when the band would hold
         fewer than r1 expected members (so the budget stays spendable).

    Two irregular paths: zero below-boundary reports hold the threshold and
    raise the boundary by L (starvation); a below count far above budget
    (beyond r1 + 3*sqrt(r1)) marks a distribution shift, and the controller
    drops smoothing for that interval so the threshold lands on fresh data
    immediately.
    """

    def __init__(
        self,
        p: float,
        r_per_sec: float,
        m_guess: float,
        interval_seconds: float = 12.0,
        L_db: float = 5.0,
        alpha: float = 0.5,
        range_ticks: tuple[int, int] = DEFAULT_RANGE_TICKS,
    ):
        if not (0.0 < p < 1.0):
            raise ValueError(f"p must be in (0, 1), got {p}")
        self.p = p
        self.alpha = alpha
        self.r_interval = r_per_sec * interval_seconds
        self.r1 = self.r_interval / 2.0
        self.r2 = self.r_interval / 2.0
        self.L_ticks = int(round(L_db * 10))
        self.range_ticks = range_ticks
        self.m_hat = float(m_guess)
        self.p_l_hat = 1.0
        # ceiling on the in-band sampling rate; bounds the report flood a
        # sudden distribution shift can cause to (cap * shifted mass)
        self.band_rate_cap = 0.5
        self.s_tick: int | None = None
        self.boundary_tick: int | None = None
        self.q_below = min(1.0, self.r_interval / m_guess)
        self.q_above = 0.0
        self.bootstrap_mode = True
        self.below_hist = SnrHistogram.empty(range_ticks)
        self.dist_hist = SnrHistogram.empty(range_ticks)
        self.interval = 0
        self.starved_intervals = 0
        self.shock_intervals = 0
        self.diagnostics: list[DymoIntervalDiag] = []
        self._instruction = dymo_bootstrap(p, r_per_sec, m_guess, interval_seconds)

    # -- public surface ----------------------------------------------------

    @property
    def s_db(self) -> float:
        if self.s_tick is None:
            return tick_to_db(self.range_ticks[0])
        return tick_to_db(self.s_tick)

    def current_instruction(self) -> GroupInstruction:
        return self._instruction

    def step(self, report_ticks: np.ndarray) -> float:
        """Consume one interval's reports, return the threshold estimate s(t)."""
        report_ticks = np.asarray(report_ticks, dtype=np.int64)
        if self.bootstrap_mode:
            self._bootstrap_step(report_ticks)
        else:
            self._iterative_step(report_ticks)
        self.interval += 1
        self._emit_instruction()
        return self.s_db

    # -- internals ----------------------------------------------------------

    def _bootstrap_step(self, ticks: np.ndarray) -> None:
        y = int(ticks.size)
        if y == 0:
            # nothing heard: stay in bootstrap with the same single group
            self.starved_intervals += 1
            self.diagnostics.append(DymoIntervalDiag(
                self.interval, 0, 0, True, False, None, self.p_l_hat, self.m_hat))
            return
        q0 = self.q_below
        self.m_hat = max(1.0, y / q0)
        fresh = SnrHistogram.from_ticks(ticks, 1.0, self.range_ticks)
        self.s_tick = quantile_tick(fresh, self.p)
        self.dist_hist = SnrHistogram.from_ticks(ticks, 1.0 / q0, self.range_ticks)
        boundary = self._choose_boundary(self.s_tick)
        below = ticks[ticks < boundary]
        self.below_hist = SnrHistogram.from_ticks(below, 1.0, self.range_ticks)
        self.p_l_hat = max(self.p, min(1.0, below.size / y))
        self.bootstrap_mode = False
        self.diagnostics.append(DymoIntervalDiag(
            self.interval, y, 0, False, False, boundary, self.p_l_hat, self.m_hat))
        self.boundary_tick = boundary

    def _iterative_step(self, ticks: np.ndarray) -> None:
        boundary = self.boundary_tick
        below = ticks[ticks < boundary]
        above = ticks[ticks >= boundary]
        y_b, y_a = int(below.size), int(above.size)

        ht_count = 0.0
        if self.q_below > 0:
            ht_count += y_b / self.q_below
        if self.q_above > 0:
            ht_count += y_a / self.q_above

        if y_b == 0:
            # starved band: hold the threshold, raise the boundary by L
            self.starved_intervals += 1
            if ht_count > 0:
                self.m_hat = max(1.0, exp_smooth(self.m_hat, ht_count, self.alpha))
            fresh_dist = SnrHistogram.from_ticks(above, 1.0 / self.q_above if self.q_above > 0 else 0.0, self.range_ticks)
            self.dist_hist = merge_smoothed(self.dist_hist, fresh_dist, self.alpha)
            self.below_hist = merge_smoothed(
                self.below_hist, SnrHistogram.empty(self.range_ticks), self.alpha)
            self.boundary_tick = boundary + self.L_ticks
            self.diagnostics.append(DymoIntervalDiag(
                self.interval, 0, y_a, True, False, self.boundary_tick, self.p_l_hat, self.m_hat))
            return

        self.m_hat = max(1.0, exp_smooth(self.m_hat, ht_count, self.alpha))
        # single-interval inverse-probability estimate; folded into the
        # smoothed distribution below, kept raw in the diagnostics
        p_l_counts = estimate_subpopulation_fraction(y_b, self.m_hat, self.q_below).estimate

        # a genuine distribution shift floods the band well past both the
        # 3-sigma binomial envelope and 2.5x the budgeted count; population
        # drift and band-sizing noise stay below the guard
        shock = y_b > max(self.r1 + 3.0 * math.sqrt(self.r1), 2.5 * self.r1)
        fresh_below = SnrHistogram.from_ticks(below, 1.0, self.range_ticks)
        fresh_dist = SnrHistogram.from_ticks(below, 1.0 / self.q_below, self.range_ticks)
        if y_a and self.q_above > 0:
            fresh_dist.add_ticks(above, 1.0 / self.q_above)

        if shock:
            # distribution shift: trust this interval's data outright
            self.shock_intervals += 1
            self.below_hist = fresh_below
            self.dist_hist = fresh_dist
            self.m_hat = max(1.0, ht_count)
        else:
            self.below_hist = merge_smoothed(self.below_hist, fresh_below, self.alpha)
            self.dist_hist = merge_smoothed(self.dist_hist, fresh_dist, self.alpha)
        # band fraction from the smoothed distribution estimate: far less
        # noisy than the single-interval count ratio
        self.p_l_hat = max(self.p, self._est_fraction_below(boundary))
        p_prime = min(1.0, self.p / self.p_l_hat)
        undershoot = self.p_l_hat <= self.p  # quantile escaped above the band

        # raw threshold from this interval's below-band reports; smoothing
        # lives in the threshold and the state histograms
        x_hat_tick = quantile_tick(fresh_below, p_prime)
        if shock or self.s_tick is None:
            self.s_tick = x_hat_tick
            self.boundary_tick = self._choose_boundary(self.s_tick)
        elif undershoot:
            # upward shift past the band edge: the band content only bounds
            # the new threshold from below, so climb the boundary by L to
            # recapture the tail next interval
            smoothed = exp_smooth(tick_to_db(self.s_tick), tick_to_db(x_hat_tick), self.alpha)
            self.s_tick = quantize(smoothed)
            self.boundary_tick = max(self._choose_boundary(self.s_tick), boundary + self.L_ticks)
        else:
            smoothed = exp_smooth(tick_to_db(self.s_tick), tick_to_db(x_hat_tick), self.alpha)
            self.s_tick = quantize(smoothed)
            # the boundary is a control variable: smoothing it stabilizes
            # the band occupancy without biasing any estimate
            target = self._choose_boundary(self.s_tick)
            self.boundary_tick = int(round(exp_smooth(boundary, target, self.alpha)))
        self.diagnostics.append(DymoIntervalDiag(
            self.interval, y_b, y_a, False, shock, self.boundary_tick,
            p_l_counts, self.m_hat, x_hat_tick, self.q_below))

    def _choose_boundary(self, s_tick: int) -> int:
        """Next monitored-band boundary, adapted to the report budget.

        The band is sized so the below group holds about 2*r1 expected
        members, sampled at rate <= 1/2: reports concentrate around the
        threshold while a sudden flood of the band costs at most half the
        shifted mass in extra reports. The band never covers less than
        twice the target tail mass and is never thinner than 1 dB. Bands
        thinner than the budget widen automatically through the same rule;
        with no distribution estimate yet the Lipschitz margin L is the
        fallback width.
        """
        lo_tick, hi_tick = self.range_ticks
        total = self.dist_hist.total_weight
        if total <= 0:
            return min(s_tick + self.L_ticks, hi_tick)
        target_fraction = min(1.0, max(self.r1 / (self.band_rate_cap * self.m_hat), 2.0 * self.p))
        cum = np.cumsum(self.dist_hist.counts)
        j = int(np.searchsorted(cum, target_fraction * total - 1e-12 * total, side="left"))
        budget_edge = self.dist_hist.origin_tick + min(j, self.dist_hist.counts.size - 1) + 1
        return min(max(budget_edge, s_tick + 10), hi_tick)

    def _est_fraction_below(self, tick: int) -> float:
        total = self.dist_hist.total_weight
        if total <= 0:
            return 1.0
        frac = self.dist_hist.mass_below_tick(tick) / total
        return min(1.0 - 1e-9, max(1e-9, frac))

    def _emit_instruction(self) -> None:
        if self.bootstrap_mode:
            q0 = min(1.0, self.r_interval / max(1.0, self.m_hat))
            self._instruction = GroupInstruction(ranges=((None, None, q0),), interval=self.interval)
            self.q_below = q0
            self.q_above = 0.0
            return
        boundary = self.boundary_tick
        frac_below = self._est_fraction_below(boundary)
        q = min(1.0, self.r1 / (frac_below * self.m_hat))
        q_above = min(1.0, self.r2 / ((1.0 - frac_below) * self.m_hat))
        self.q_below = q
        self.q_above = q_above
        self._instruction = GroupInstruction(
            ranges=((None, boundary, q), (boundary, None, q_above)),
            interval=self.interval,
        )


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------

class OrderStatisticsController:
    """Fixed-probability random sampling baseline.

    Every active UE reports with probability r_interval / E[m(t)] per
    interval, configured once from the known expected active count. The
    history variant exp-smooths the report histogram before taking the
    quantile; both hold the previous threshold on a zero-report interval.
    """

    def __init__(
        self,
        p: float,
        r_per_sec: float,
        expected_active: float,
        interval_seconds: float = 12.0,
        with_history: bool = True,
        alpha: float = 0.5,
        range_ticks: tuple[int, int] = DEFAULT_RANGE_TICKS,
    ):
        if expected_active <= 0:
            raise ValueError("expected_active must be positive")
        self.p = p
        self.alpha = alpha
        self.with_history = with_history
        self.range_ticks = range_ticks
        self.report_probability = min(1.0, r_per_sec * interval_seconds / expected_active)
        self.smoothed: SnrHistogram | None = None
        self.s_tick: int | None = None
        self.interval = 0
        self._instruction = GroupInstruction(
            ranges=((None, None, self.report_probability),), interval=0)

    @property
    def s_db(self) -> float:
        if self.s_tick is None:
            return tick_to_db(self.range_ticks[0])
        return tick_to_db(self.s_tick)

    def current_instruction(self) -> GroupInstruction:
        return self._instruction

    def step(self, report_ticks: np.ndarray) -> float:
        report_ticks = np.asarray(report_ticks, dtype=np.int64)
        fresh = SnrHistogram.from_ticks(report_ticks, 1.0, self.range_ticks)
        if self.with_history:
            if self.smoothed is None:
                self.smoothed = fresh
            else:
                self.smoothed = merge_smoothed(self.smoothed, fresh, self.alpha)
            hist = self.smoothed
        else:
            hist = fresh
        if report_ticks.size > 0:
            self.s_tick = quantile_tick(hist, self.p)
        self.interval += 1
        self._instruction = GroupInstruction(
            ranges=((None, None, self.report_probability),), interval=self.interval)
        return self.s_db


class UniformController:
    """Static threshold computed once from full grid knowledge.

    The synthetic population puts equal UE mass in every rectangle, each
    spread as a quantized Gaussian around the rectangle's mean; the
    threshold is the lower-edge p-quantile of that mixture and never
    changes afterwards.
    """

    def __init__(
        self,
        p: float,
        cell_means_db: np.ndarray,
        sigma_db: float,
        range_ticks: tuple[int, int] = DEFAULT_RANGE_TICKS,
    ):
        hist = population_histogram(cell_means_db, sigma_db, range_ticks)
        self.s_tick = quantile_tick(hist, p)

    @property
    def s_db(self) -> float:
        return tick_to_db(self.s_tick)

    def step(self, report_ticks: np.ndarray = None) -> float:
        return self.s_db


def population_histogram(
    cell_means_db: np.ndarray,
    sigma_db: float,
    range_ticks: tuple[int, int] = DEFAULT_RANGE_TICKS,
) -> SnrHistogram:
    """Expected quantized-SNR histogram of equal mass per cell."""
    means = np.asarray(cell_means_db, dtype=float).ravel()
    hist = SnrHistogram.empty(range_ticks)
    if sigma_db == 0.0:
        from .snr import quantize_array

        hist.add_ticks(quantize_array(means), 1.0)
        return hist
    lo, hi = range_ticks
    interior_edges = np.arange(lo + 1, hi) / 10.0
    z = (interior_edges[None, :] - means[:, None]) / sigma_db
    # summing the per-cell CDFs first turns the per-bin mass into a diff of
    # a single (n_bins + 1)-vector instead of a cells x bins matrix
    cdf_colsum = ndtr(z).sum(axis=0)
    cum = np.concatenate([[0.0], cdf_colsum, [float(means.size)]])
    hist.counts[:] = np.diff(cum)
    return hist


def optimal_step(active_ticks: np.ndarray, p: float, range_ticks: tuple[int, int] = DEFAULT_RANGE_TICKS) -> float:
    """Oracle threshold: lower-edge p-quantile over the exact quantized
    SNRs of all active UEs."""
    hist = SnrHistogram.from_ticks(np.asarray(active_ticks, dtype=np.int64), 1.0, range_ticks)
    return tick_to_db(quantile_tick(hist, p))


# ---------------------------------------------------------------------------
# MCS mapping
# ---------------------------------------------------------------------------

class McsChoice(NamedTuple):
    index: int
    spectral_efficiency: float
    floored: bool


@dataclass(frozen=True)
class McsTable:
    """Monotone step function from minimum SNR to (MCS index, efficiency)."""

    min_snr_db: tuple[float, ...]
    spectral_efficiency: tuple[float, ...]

    def __post_init__(self):
        if len(self.min_snr_db) != len(self.spectral_efficiency) or not self.min_snr_db:
            raise ValueError("table rows must be nonempty and aligned")
        if list(self.min_snr_db) != sorted(self.min_snr_db):
            raise ValueError("min SNR column must be nondecreasing")
        if list(self.spectral_efficiency) != sorted(self.spectral_efficiency):
            raise ValueError("spectral efficiency must be nondecreasing in MCS")


def default_mcs_table() -> McsTable:
    """15 monotone rows spanning -6..20 dB; indices 3 and 4 carry the two
    anchored efficiencies 0.29 and 0.36 bit/s/Hz. The exact ladder is a
    config artifact, not a truth claim."""
    min_snr = (-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 17.5, 19.0, 20.0)
    eff = (0.15, 0.19, 0.23, 0.29, 0.36, 0.44, 0.55, 0.68, 0.85, 1.05, 1.30, 1.60, 2.00, 2.40, 2.87)
    return McsTable(min_snr_db=min_snr, spectral_efficiency=eff)


def mcs_from_threshold(s_db: float, table: McsTable | None = None) -> McsChoice:
    """Highest MCS whose minimum SNR requirement is at or below s.

    A threshold below the table floor selects the lowest MCS and sets the
    floored flag (the caller's diagnostics should surface it).
    """
    if table is None:
        table = default_mcs_table()
    idx = int(np.searchsorted(table.min_snr_db, s_db, side="right")) - 1
    if idx < 0:
        return McsChoice(index=0, spectral_efficiency=table.spectral_efficiency[0], floored=True)
    return McsChoice(index=idx, spectral_efficiency=table.spectral_efficiency[idx], floored=False)


def load_mcs_table(fp: IO[str]) -> McsTable:
    """Read CSV rows (mcs_index, min_snr_dB, spectral_efficiency)."""
    rows = []
    reader = csv.reader(fp)
    for row in reader:
        if not row or row[0].strip().startswith("#") or row[0].strip() == "mcs_index":
            continue
        rows.append((int(row[0]), float(row[1]), float(row[2])))
    rows.sort()
    if [i for i, _, _ in rows] != list(range(len(rows))):
        raise ValueError("MCS indices must be contiguous from 0")
    return McsTable(
        min_snr_db=tuple(snr for _, snr, _ in rows),
        spectral_efficiency=tuple(eff for _, _, eff in rows),
    )


def dump_instruction_trace(
    instructions: Sequence[GroupInstruction], fp: IO[str]
) -> None:
    """CSV dump (interval, range_index, lower_db, upper_db, probability)."""
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(["interval", "range_index", "lower_db", "upper_db", "probability"])
    for instr in instructions:
        for k, (lo, hi, prob) in enumerate(instr.ranges_db()):
            writer.writerow([instr.interval, k, repr(lo), repr(hi), repr(prob)])
