"""Scenario orchestration: configuration, instances, sweeps, artifacts.

A run executes, for every sweep point and instance seed, one scenario
trace replayed through every requested scheme on common SNR draws. The
controllers differ only in their sampling decisions and estimator state.

Every scheme consumes the same warm-up phase before the recorded window:
the feedback loop runs ``warmup_intervals`` reporting intervals against
the initial venue state (interval 0 frozen), mirroring a system that was
already operating when the measurement window starts. The first warm-up
interval is the bootstrap interval of the adaptive controller.
"""
from __future__ import annotations

import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .controller import (
    DymoController,
    McsTable,
    OrderStatisticsController,
    SCHEME_NAMES,
    UniformController,
    default_mcs_table,
    mcs_from_threshold,
    population_histogram,
)
from .metrics import (
    IntervalRecord,
    aggregate_runs,
    instance_summary,
    write_interval_csv,
    write_summary_csv,
)
from .snr import DEFAULT_RANGE_TICKS, SnrHistogram, quantile_tick, quantize_array, tick_to_db
from .venue import STREAM_DRAWS, Scenario, ScenarioTrace, stream_rng

__all__ = ["RunConfig", "ConfigError", "InstanceResult", "run_instance", "run"]

OUTPUT_DIR_ENV = "DYMOSIM_OUT"

# decision-stream indices, offset past the venue streams
_SCHEME_STREAM = {name: 10 + k for k, name in enumerate(SCHEME_NAMES)}


class ConfigError(ValueError):
    """Invalid run configuration; message names the offending field."""


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run parameters. Defaults follow the reference
    operating point: 20,000 UEs, QoS fraction 0.1%, 5 reports/s."""

    scenario: str = "homogeneous"
    m: int = 20000
    p: float = 0.001
    r: float = 5.0
    duration: int = 150
    interval_seconds: float = 12.0
    seed: int = 1
    L: float = 5.0
    alpha: float = 0.5
    schemes: tuple[str, ...] = SCHEME_NAMES
    sweep_axis: str | None = None
    sweep_values: tuple[float, ...] = ()
    instances: int = 1
    warmup_intervals: int = 15
    sigma_db: float = 5.0
    snr_offset_db: float = 0.0
    failure_start: int = 50
    failure_end: int = 75
    mcs_table: McsTable = field(default_factory=default_mcs_table)
    out_dir: str | None = None
    parallel: int = 1

    def validated(self) -> "RunConfig":
        if self.scenario not in ("homogeneous", "stadium", "failure"):
            raise ConfigError(f"scenario: unknown kind {self.scenario!r}")
        if self.m <= 0:
            raise ConfigError(f"m: must be positive, got {self.m}")
        if not (0.0 < self.p < 1.0):
            raise ConfigError(f"p: must be in (0, 1), got {self.p}")
        if self.r <= 0:
            raise ConfigError(f"r: must be positive, got {self.r}")
        if self.duration <= 0:
            raise ConfigError(f"duration: must be positive, got {self.duration}")
        if self.instances < 1:
            raise ConfigError(f"instances: must be >= 1, got {self.instances}")
        if self.parallel < 1:
            raise ConfigError(f"parallel: must be >= 1, got {self.parallel}")
        if self.warmup_intervals < 1:
            raise ConfigError(f"warmup_intervals: must be >= 1, got {self.warmup_intervals}")
        unknown = set(self.schemes) - set(SCHEME_NAMES)
        if unknown:
            raise ConfigError(f"schemes: unknown scheme(s) {sorted(unknown)}")
        if not self.schemes:
            raise ConfigError("schemes: at least one scheme required")
        if self.sweep_axis is not None:
            if self.sweep_axis not in ("m", "p", "r"):
                raise ConfigError(f"sweep: axis must be one of m, p, r; got {self.sweep_axis!r}")
            if not self.sweep_values:
                raise ConfigError("sweep: no sweep values given")
        return self

    @property
    def r_interval(self) -> float:
        return self.r * self.interval_seconds

    def at_sweep_point(self, value: float) -> "RunConfig":
        if self.sweep_axis == "m":
            return replace(self, m=int(value))
        if self.sweep_axis == "p":
            return replace(self, p=float(value))
        if self.sweep_axis == "r":
            return replace(self, r=float(value))
        return self

    def echo_lines(self) -> list[str]:
        """Resolved-config echo; execution details (out dir, parallel
        degree) are excluded so artifacts stay byte-identical."""
        lines = []
        skip = {"out_dir", "parallel", "mcs_table"}
        for f in fields(self):
            if f.name in skip:
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name} = {value}")
        lines.append("mcs_table = " + ";".join(
            f"{i}:{snr}:{eff}"
            for i, (snr, eff) in enumerate(zip(self.mcs_table.min_snr_db, self.mcs_table.spectral_efficiency))
        ))
        return lines


@dataclass
class InstanceResult:
    """One scenario instance replayed through all requested schemes."""

    config: RunConfig
    instance: int
    records: list[IntervalRecord]
    m_active: list[int]
    optimal_s: dict[int, float]
    summary: dict[str, dict[str, float]]
    diagnostics: dict


def _range_ticks(config: RunConfig) -> tuple[int, int]:
    lo, hi = DEFAULT_RANGE_TICKS
    shift = int(round(config.snr_offset_db * 10))
    return (lo + shift, hi + shift)


def run_instance(config: RunConfig, instance: int = 0) -> InstanceResult:
    """Simulate one instance: warm-up, then the recorded window."""
    config = config.validated()
    scenario = Scenario(
        kind=config.scenario,
        m=config.m,
        duration=config.duration,
        interval_seconds=config.interval_seconds,
        seed=config.seed,
        instance=instance,
        sigma_db=config.sigma_db,
        snr_offset_db=config.snr_offset_db,
        failure_start=config.failure_start,
        failure_end=config.failure_end,
    )
    trace = ScenarioTrace(scenario)
    range_ticks = _range_ticks(config)
    expected_active = trace.mean_active_count()

    controllers = {}
    if "dymo" in config.schemes:
        controllers["dymo"] = DymoController(
            p=config.p, r_per_sec=config.r, m_guess=config.m,
            interval_seconds=config.interval_seconds, L_db=config.L,
            alpha=config.alpha, range_ticks=range_ticks,
        )
    for name, with_history in (("order_stats_hist", True), ("order_stats_nohist", False)):
        if name in config.schemes:
            controllers[name] = OrderStatisticsController(
                p=config.p, r_per_sec=config.r, expected_active=expected_active,
                interval_seconds=config.interval_seconds, with_history=with_history,
                alpha=config.alpha, range_ticks=range_ticks,
            )
    uniform = None
    if "uniform" in config.schemes:
        uniform = UniformController(
            p=config.p, cell_means_db=trace.grid.mean_snr,
            sigma_db=config.sigma_db, range_ticks=range_ticks,
        )

    draws_rng = stream_rng(config.seed, STREAM_DRAWS, instance)
    decision_rngs = {
        name: stream_rng(config.seed, _SCHEME_STREAM[name], instance)
        for name in controllers
    }

    def sample_reports(name: str, active_ticks: np.ndarray) -> np.ndarray:
        instr = controllers[name].current_instruction()
        probs = instr.probabilities(active_ticks)
        mask = decision_rngs[name].random(active_ticks.size) < probs
        return active_ticks[mask]

    # warm-up against the initial venue state; first interval bootstraps
    for _ in range(config.warmup_intervals):
        active = trace.active_mask(0)
        ticks = quantize_array(trace.draw_snr(0, draws_rng))
        active_ticks = ticks[active]
        for name in controllers:
            controllers[name].step(sample_reports(name, active_ticks))

    records: list[IntervalRecord] = []
    m_active: list[int] = []
    optimal_s: dict[int, float] = {}
    optimal_bin_share: list[float] = []
    floored_counts = {name: 0 for name in config.schemes}
    lipschitz_violations = 0
    lipschitz_drift_sum = 0.0
    prev_cell_means = None
    clamped_low = clamped_high = 0

    for t in range(config.duration):
        active = trace.active_mask(t)
        m_t = int(np.count_nonzero(active))
        raw = trace.draw_snr(t, draws_rng)
        ticks = quantize_array(raw)
        active_ticks = ticks[active]
        m_active.append(m_t)

        cell_means = trace.cell_means(t)
        if prev_cell_means is not None:
            drift = np.abs(cell_means - prev_cell_means)
            lipschitz_violations += int(np.count_nonzero(drift > config.L))
            lipschitz_drift_sum += float(drift.mean())
        prev_cell_means = cell_means

        opt_hist = SnrHistogram.from_ticks(active_ticks, 1.0, range_ticks)
        clamped_low += opt_hist.clamped_low
        clamped_high += opt_hist.clamped_high
        s_opt_tick = quantile_tick(opt_hist, config.p)
        optimal_s[t] = tick_to_db(s_opt_tick)
        share = float(opt_hist.counts[s_opt_tick - opt_hist.origin_tick]) / max(1.0, opt_hist.total_weight)
        optimal_bin_share.append(share)

        for name in config.schemes:
            if name == "optimal":
                s_tick = s_opt_tick
                n_reports = 0
            elif name == "uniform":
                s_tick = uniform.s_tick
                n_reports = 0
            else:
                reports = sample_reports(name, active_ticks)
                controllers[name].step(reports)
                s_tick = controllers[name].s_tick
                n_reports = int(reports.size)
                if s_tick is None:
                    s_tick = range_ticks[0]
            outlier_count = int(np.count_nonzero(active_ticks < s_tick))
            s_db = tick_to_db(s_tick)
            choice = mcs_from_threshold(s_db, config.mcs_table)
            if choice.floored:
                floored_counts[name] += 1
            records.append(IntervalRecord(
                t=t,
                scheme=name,
                s_est_db=s_db,
                actual_pct=outlier_count / m_t,
                outliers=float(outlier_count),
                reports=n_reports,
                overhead_violation=max(0.0, n_reports - config.r_interval),
                mcs=choice.index,
                spec_eff=choice.spectral_efficiency,
            ))

    summary = instance_summary(
        records, config.p, config.r_interval, m_active,
        optimal_s if "optimal" in config.schemes else None,
    )
    diagnostics = {
        "expected_active": expected_active,
        "optimal_bin_mass_share": optimal_bin_share,
        "floored_mcs_intervals": floored_counts,
        "lipschitz_violation_ue_intervals": lipschitz_violations,
        "lipschitz_mean_abs_drift_db": (
            lipschitz_drift_sum / (config.duration - 1) if config.duration > 1 else 0.0
        ),
        "histogram_clamped_low": clamped_low,
        "histogram_clamped_high": clamped_high,
    }
    if "dymo" in controllers:
        dymo = controllers["dymo"]
        diagnostics["dymo_starved_intervals"] = dymo.starved_intervals
        diagnostics["dymo_shock_intervals"] = dymo.shock_intervals
        diagnostics["dymo_m_hat"] = dymo.m_hat
    return InstanceResult(
        config=config,
        instance=instance,
        records=records,
        m_active=m_active,
        optimal_s=optimal_s,
        summary=summary,
        diagnostics=diagnostics,
    )


def _run_point(args: tuple[RunConfig, int]) -> InstanceResult:
    config, instance = args
    return run_instance(config, instance)


def run(config: RunConfig) -> Path:
    """Execute a full run (sweep points x instances), write artifacts.

    Returns the output directory. On failure every artifact written by
    this run is removed.
    """
    config = config.validated()
    out_dir = Path(config.out_dir or os.environ.get(OUTPUT_DIR_ENV) or "runs")
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if config.sweep_axis is None:
        points: list[tuple[str, str, RunConfig]] = [("none", "-", config)]
    else:
        points = [
            (config.sweep_axis, str(v), config.at_sweep_point(v))
            for v in config.sweep_values
        ]

    try:
        jobs = [
            (label, value, point_cfg, instance)
            for (label, value, point_cfg) in points
            for instance in range(config.instances)
        ]
        if config.parallel > 1:
            with ProcessPoolExecutor(max_workers=config.parallel) as pool:
                results = list(pool.map(_run_point, [(cfg, inst) for (_, _, cfg, inst) in jobs]))
        else:
            results = [_run_point((cfg, inst)) for (_, _, cfg, inst) in jobs]

        config_path = out_dir / "config.txt"
        with open(config_path, "w", encoding="utf-8", newline="\n") as fp:
            fp.write("\n".join(config.echo_lines()) + "\n")
        written.append(config_path)

        summary_rows = []
        by_point: dict[tuple[str, str], list[InstanceResult]] = {}
        for (label, value, _, instance), result in zip(jobs, results):
            suffix = f"_{label}-{value}" if label != "none" else ""
            path = out_dir / f"intervals{suffix}_inst{instance}.csv"
            with open(path, "w", encoding="utf-8", newline="\n") as fp:
                write_interval_csv(result.records, fp)
            written.append(path)
            by_point.setdefault((label, value), []).append(result)
        for (label, value), instance_results in by_point.items():
            agg = aggregate_runs([res.summary for res in instance_results])
            for scheme in sorted(agg):
                summary_rows.append((label, value, scheme, agg[scheme]))
        summary_path = out_dir / "summary.csv"
        with open(summary_path, "w", encoding="utf-8", newline="\n") as fp:
            write_summary_csv(summary_rows, fp)
        written.append(summary_path)
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return out_dir
