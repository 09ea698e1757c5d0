"""Per-interval evaluation metrics, aggregation and CSV emission."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "IntervalRecord",
    "actual_percentile",
    "rmse",
    "instance_summary",
    "aggregate_runs",
    "INTERVAL_CSV_HEADER",
    "SUMMARY_CSV_HEADER",
    "write_interval_csv",
    "write_summary_csv",
]

INTERVAL_CSV_HEADER = "t,scheme,s_est_db,actual_pct,outliers,reports,overhead_violation,mcs,spec_eff"
SUMMARY_CSV_HEADER = "param,value,scheme,pct_rmse,thr_rmse_db,outlier_rmse,overhead_rmse"


@dataclass(frozen=True)
class IntervalRecord:
    """One scheme's metrics row for one reporting interval."""

    t: int
    scheme: str
    s_est_db: float
    actual_pct: float
    outliers: float
    reports: int
    overhead_violation: float
    mcs: int
    spec_eff: float

    def __post_init__(self):
        if not (0.0 <= self.actual_pct <= 1.0):
            raise ValueError(f"actual percentile {self.actual_pct} outside [0, 1]")
        if self.outliers < 0 or self.reports < 0:
            raise ValueError("outliers and report counts must be nonnegative")


def actual_percentile(s_est_db: float, active_snrs_db: np.ndarray) -> float:
    """Fraction of active UEs with individual SNR strictly below s_est."""
    active = np.asarray(active_snrs_db)
    if active.size == 0:
        raise ValueError("actual percentile undefined for an empty active set")
    return float(np.count_nonzero(active < s_est_db)) / active.size


def rmse(series: Sequence[float], target) -> float:
    """Root mean squared deviation of series from target (scalar or series)."""
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise ValueError("rmse of an empty series is undefined")
    target = np.asarray(target, dtype=float)
    if target.ndim > 0 and target.shape != series.shape:
        raise ValueError("series and target lengths differ")
    return float(np.sqrt(np.mean((series - target) ** 2)))


def instance_summary(
    records: Sequence[IntervalRecord],
    p: float,
    r_interval: float,
    m_active: Sequence[int],
    optimal_s: Mapping[int, float] | None = None,
) -> dict[str, dict[str, float]]:
    """Per-scheme RMSEs for one scenario instance.

    pct_rmse       actual percentile vs the constant QoS target p
    thr_rmse_db    threshold vs the optimal scheme's threshold (NaN when
                   no optimal trace is available)
    outlier_rmse   outlier count vs the permitted count p * m(t)
    overhead_rmse  reports per interval vs the constant budget r_interval
    """
    m_active = np.asarray(m_active, dtype=float)
    by_scheme: dict[str, list[IntervalRecord]] = {}
    for rec in records:
        by_scheme.setdefault(rec.scheme, []).append(rec)
    out: dict[str, dict[str, float]] = {}
    for scheme, rows in by_scheme.items():
        rows.sort(key=lambda rec: rec.t)
        ts = [rec.t for rec in rows]
        pct = [rec.actual_pct for rec in rows]
        outliers = [rec.outliers for rec in rows]
        reports = [rec.reports for rec in rows]
        s_est = [rec.s_est_db for rec in rows]
        permitted = p * m_active[ts]
        if optimal_s is not None and scheme != "optimal":
            thr_target = [optimal_s[t] for t in ts]
            thr = rmse(s_est, thr_target)
        elif scheme == "optimal":
            thr = 0.0
        else:
            thr = float("nan")
        out[scheme] = {
            "pct_rmse": rmse(pct, p),
            "thr_rmse_db": thr,
            "outlier_rmse": rmse(outliers, permitted),
            "overhead_rmse": rmse(reports, r_interval),
        }
    return out


def aggregate_runs(summaries: Sequence[Mapping[str, Mapping[str, float]]]) -> dict[str, dict[str, float]]:
    """Mean of per-instance RMSEs across k instances, per scheme."""
    if not summaries:
        raise ValueError("need at least one instance summary")
    schemes = sorted(summaries[0].keys())
    out: dict[str, dict[str, float]] = {}
    for scheme in schemes:
        metrics = sorted(summaries[0][scheme].keys())
        out[scheme] = {
            metric: float(np.mean([s[scheme][metric] for s in summaries]))
            for metric in metrics
        }
    return out


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_interval_csv(records: Iterable[IntervalRecord], fp: IO[str]) -> None:
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(INTERVAL_CSV_HEADER.split(","))
    for rec in records:
        writer.writerow([
            rec.t,
            rec.scheme,
            _fmt(rec.s_est_db),
            _fmt(rec.actual_pct),
            _fmt(rec.outliers),
            rec.reports,
            _fmt(rec.overhead_violation),
            rec.mcs,
            _fmt(rec.spec_eff),
        ])


def write_summary_csv(
    rows: Iterable[tuple[str, str, str, Mapping[str, float]]], fp: IO[str]
) -> None:
    """Rows are (param, value, scheme, metrics-dict)."""
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(SUMMARY_CSV_HEADER.split(","))
    for param, value, scheme, metrics in rows:
        writer.writerow([
            param,
            value,
            scheme,
            _fmt(metrics["pct_rmse"]),
            _fmt(metrics["thr_rmse_db"]),
            _fmt(metrics["outlier_rmse"]),
            _fmt(metrics["overhead_rmse"]),
        ])
