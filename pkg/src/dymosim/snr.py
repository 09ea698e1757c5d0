"""SNR quantization and fixed-width histograms.

All schemes see SNR through the same 0.1 dB quantizer and the same
lower-edge histogram quantile, so quantization error hits every scheme
identically. Bin arithmetic is done on scaled integer ticks (dB * 10);
floats only appear at the edges of the API.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .estimation import InsufficientReports

__all__ = [
    "BIN_WIDTH_DB",
    "quantize",
    "quantize_array",
    "tick_to_db",
    "SnrHistogram",
    "histogram_quantile",
    "merge_smoothed",
]

BIN_WIDTH_DB = 0.1

# Default histogram span in ticks: [-20.0 dB, 40.0 dB). The low edge sits
# well below every scenario's 0.1% tail so edge clamping never distorts a
# quantile; the clamp counters stay visible in run diagnostics regardless.
DEFAULT_RANGE_TICKS = (-200, 400)


def quantize(snr_db: float) -> int:
    """Quantize a dB value to the tick index of its 0.1 dB bin.

    Floor semantics: tick k covers [k/10, (k+1)/10) dB, so a value sitting
    on a bin edge belongs to the bin it opens. Rounding to nine decimals
    first keeps decimal edge values (17.2, -3.1, ...) exact despite their
    inexact binary representation.
    """
    if not math.isfinite(snr_db):
        raise ValueError(f"cannot quantize non-finite SNR {snr_db!r}")
    return int(math.floor(round(snr_db * 10.0, 9)))


def quantize_array(snr_db: np.ndarray) -> np.ndarray:
    """Vectorized quantize() returning int64 ticks."""
    arr = np.asarray(snr_db, dtype=float)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError("cannot quantize non-finite SNR values")
    return np.floor(np.round(arr * 10.0, 9)).astype(np.int64)


def tick_to_db(tick) -> float:
    """Lower edge in dB of the bin with the given tick index."""
    return float(tick) / 10.0


@dataclass
class SnrHistogram:
    """Weighted counts over contiguous 0.1 dB bins.

    origin_tick is the tick index of bin 0; counts[i] is the weight of the
    bin covering [origin_tick + i, origin_tick + i + 1) ticks. Out-of-range
    samples are clamped into the edge bins and tallied in clamped_low /
    clamped_high so the distortion stays visible in run diagnostics.
    """

    origin_tick: int
    counts: np.ndarray
    clamped_low: int = 0
    clamped_high: int = 0

    bin_width_db: float = field(default=BIN_WIDTH_DB, init=False, repr=False)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.ndim != 1 or self.counts.size == 0:
            raise ValueError("counts must be a nonempty 1-D array")
        if np.any(self.counts < 0):
            raise ValueError("bin weights must be nonnegative")

    @classmethod
    def empty(cls, range_ticks: tuple[int, int] = DEFAULT_RANGE_TICKS) -> "SnrHistogram":
        lo, hi = range_ticks
        if hi <= lo:
            raise ValueError(f"empty tick range {range_ticks}")
        return cls(origin_tick=lo, counts=np.zeros(hi - lo, dtype=float))

    @classmethod
    def from_ticks(
        cls,
        ticks: np.ndarray,
        weights: np.ndarray | float = 1.0,
        range_ticks: tuple[int, int] = DEFAULT_RANGE_TICKS,
    ) -> "SnrHistogram":
        """Histogram quantized samples (tick indices), clamping outliers."""
        hist = cls.empty(range_ticks)
        hist.add_ticks(ticks, weights)
        return hist

    def add_ticks(self, ticks: np.ndarray, weights: np.ndarray | float = 1.0) -> None:
        ticks = np.asarray(ticks, dtype=np.int64)
        if ticks.size == 0:
            return
        n = self.counts.size
        idx = ticks - self.origin_tick
        low = idx < 0
        high = idx >= n
        self.clamped_low += int(np.count_nonzero(low))
        self.clamped_high += int(np.count_nonzero(high))
        idx = np.clip(idx, 0, n - 1)
        w = np.broadcast_to(np.asarray(weights, dtype=float), ticks.shape)
        np.add.at(self.counts, idx, w)

    @property
    def total_weight(self) -> float:
        return float(self.counts.sum())

    def bin_lower_edges_db(self) -> np.ndarray:
        return (self.origin_tick + np.arange(self.counts.size)) / 10.0

    def mass_below_tick(self, tick: int) -> float:
        """Total weight of bins strictly below the given tick edge."""
        idx = int(np.clip(tick - self.origin_tick, 0, self.counts.size))
        return float(self.counts[:idx].sum())

    def same_geometry(self, other: "SnrHistogram") -> bool:
        return (
            self.origin_tick == other.origin_tick
            and self.counts.size == other.counts.size
        )

    def copy(self) -> "SnrHistogram":
        return SnrHistogram(
            origin_tick=self.origin_tick,
            counts=self.counts.copy(),
            clamped_low=self.clamped_low,
            clamped_high=self.clamped_high,
        )

    def dump_csv(self, fp: IO[str]) -> None:
        """Write (bin_lower_edge_dB, weight) rows for debugging."""
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(["bin_lower_edge_db", "weight"])
        for edge, weight in zip(self.bin_lower_edges_db(), self.counts):
            writer.writerow([repr(float(edge)), repr(float(weight))])


def quantile_tick(hist: SnrHistogram, p: float) -> int:
    """Tick index of the bin containing the p-quantile of the histogram."""
    if not (0.0 < p <= 1.0):
        raise ValueError(f"p must be in (0, 1], got {p}")
    total = hist.total_weight
    if total <= 0:
        raise InsufficientReports("histogram holds no weight")
    cum = np.cumsum(hist.counts)
    threshold = p * total - 1e-12 * total
    idx = int(np.searchsorted(cum, threshold, side="left"))
    idx = min(idx, hist.counts.size - 1)
    return hist.origin_tick + idx


def histogram_quantile(hist: SnrHistogram, p: float) -> float:
    """Lower edge (dB) of the bin containing the p-quantile mass.

    Returning the lower edge guarantees that the fraction of mass strictly
    below the returned value is at most p; no interpolation inside the bin
    is performed.
    """
    return tick_to_db(quantile_tick(hist, p))


def merge_smoothed(prev: SnrHistogram, fresh: SnrHistogram, alpha: float) -> SnrHistogram:
    """Per-bin exponential smoothing: alpha * fresh + (1 - alpha) * prev."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if not prev.same_geometry(fresh):
        raise ValueError("histogram bin geometries differ, cannot merge")
    return SnrHistogram(
        origin_tick=prev.origin_tick,
        counts=alpha * fresh.counts + (1.0 - alpha) * prev.counts,
        clamped_low=fresh.clamped_low,
        clamped_high=fresh.clamped_high,
    )
