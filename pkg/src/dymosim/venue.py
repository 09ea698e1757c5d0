"""Venue grids, UE mobility and activity schedules.

A scenario realization is fully determined by its seed. Independent RNG
streams are used per concern so that, e.g., changing the activity draw
does not perturb the SNR field:

    stream 0  grid means
    stream 1  waypoints
    stream 2  activity schedule
    stream 3  per-interval SNR draws (one block of m standard normals per
              simulated interval, warm-up blocks first, then recorded
              intervals in order; UE index-major inside a block)

Controller-side report-decision streams live in the runner and start at
index 10.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO, Literal

import numpy as np

__all__ = [
    "VenueGrid",
    "Scenario",
    "ScenarioTrace",
    "gen_homogeneous",
    "gen_stadium",
    "apply_failure",
    "sample_ue_snr",
    "mobility_step",
    "activity_schedule",
    "stream_rng",
    "dump_heatmap",
]

CELL_SIZE_M = 10.0

STREAM_GRID = 0
STREAM_WAYPOINTS = 1
STREAM_ACTIVITY = 2
STREAM_DRAWS = 3
STREAM_FAILURE = 4


def stream_rng(seed: int, stream: int, instance: int = 0) -> np.random.Generator:
    """Named, platform-independent RNG stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(instance), int(stream)]))


@dataclass
class VenueGrid:
    """Per-rectangle mean SNR field over a rectangular venue.

    mean_snr is indexed [row, col] = [y-cell, x-cell]. failure_mean_snr,
    when set, replaces mean_snr during [failure_start, failure_end).
    """

    width_m: float
    height_m: float
    mean_snr: np.ndarray
    sigma_db: float = 5.0
    failure_mean_snr: np.ndarray | None = None
    failure_start: int | None = None
    failure_end: int | None = None

    def __post_init__(self):
        self.mean_snr = np.asarray(self.mean_snr, dtype=float)
        ny, nx = self.mean_snr.shape
        if abs(nx * CELL_SIZE_M - self.width_m) > 1e-9 or abs(ny * CELL_SIZE_M - self.height_m) > 1e-9:
            raise ValueError("cell grid does not exactly tile the venue")
        if not np.all(np.isfinite(self.mean_snr)):
            raise ValueError("grid means must be finite")

    @property
    def n_cells(self) -> tuple[int, int]:
        return self.mean_snr.shape

    def cell_index(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map positions to (row, col); every in-venue point hits exactly one cell."""
        ny, nx = self.mean_snr.shape
        col = np.clip((np.asarray(x) / CELL_SIZE_M).astype(np.int64), 0, nx - 1)
        row = np.clip((np.asarray(y) / CELL_SIZE_M).astype(np.int64), 0, ny - 1)
        return row, col

    def means_at(self, t: int) -> np.ndarray:
        """Mean field effective at recorded interval t."""
        if (
            self.failure_mean_snr is not None
            and self.failure_start is not None
            and self.failure_start <= t < self.failure_end
        ):
            return self.failure_mean_snr
        return self.mean_snr


def gen_homogeneous(
    seed: int,
    width_m: float = 1000.0,
    height_m: float = 1000.0,
    snr_range: tuple[float, float] = (5.0, 25.0),
    sigma_db: float = 5.0,
    instance: int = 0,
) -> VenueGrid:
    """Time-invariant field with every cell mean drawn i.i.d. uniform."""
    rng = stream_rng(seed, STREAM_GRID, instance)
    ny, nx = int(height_m / CELL_SIZE_M), int(width_m / CELL_SIZE_M)
    means = rng.uniform(snr_range[0], snr_range[1], size=(ny, nx))
    return VenueGrid(width_m=width_m, height_m=height_m, mean_snr=means, sigma_db=sigma_db)


def gen_stadium(
    seed: int,
    width_m: float = 1000.0,
    height_m: float = 1000.0,
    center_range: tuple[float, float] = (15.0, 25.0),
    vicinity_range: tuple[float, float] = (5.0, 10.0),
    center_fraction: float = 0.5,
    sigma_db: float = 5.0,
    instance: int = 0,
) -> VenueGrid:
    """High-SNR centered square (side = center_fraction of the venue side)
    surrounded by a low-SNR vicinity."""
    rng = stream_rng(seed, STREAM_GRID, instance)
    ny, nx = int(height_m / CELL_SIZE_M), int(width_m / CELL_SIZE_M)
    means = rng.uniform(vicinity_range[0], vicinity_range[1], size=(ny, nx))
    cy0 = int(round(ny * (1 - center_fraction) / 2))
    cx0 = int(round(nx * (1 - center_fraction) / 2))
    cy1 = ny - cy0
    cx1 = nx - cx0
    means[cy0:cy1, cx0:cx1] = rng.uniform(center_range[0], center_range[1], size=(cy1 - cy0, cx1 - cx0))
    return VenueGrid(width_m=width_m, height_m=height_m, mean_snr=means, sigma_db=sigma_db)


def gen_failure_base(
    seed: int,
    width_m: float = 1000.0,
    height_m: float = 1000.0,
    snr_range: tuple[float, float] = (15.0, 25.0),
    sigma_db: float = 5.0,
    instance: int = 0,
) -> VenueGrid:
    """High-SNR homogeneous base field for the failure scenario."""
    return gen_homogeneous(seed, width_m, height_m, snr_range, sigma_db, instance)


def apply_failure(
    grid: VenueGrid,
    t_start: int,
    t_end: int,
    duration: int,
    seed: int,
    region_fraction: float = 0.25,
    failed_range: tuple[float, float] = (5.0, 10.0),
    instance: int = 0,
) -> VenueGrid:
    """Degrade a contiguous block of cells during [t_start, t_end).

    The affected block is the lower-left rectangle covering region_fraction
    of the cells; its means are redrawn uniform in failed_range for the
    window and restored bit-exactly outside it.
    """
    if not (0 <= t_start < t_end <= duration):
        raise ValueError(
            f"failure window [{t_start}, {t_end}) outside run duration {duration}"
        )
    ny, nx = grid.n_cells
    # lower-left block with aspect ratio of the venue
    side = np.sqrt(region_fraction)
    fy, fx = int(round(ny * side)), int(round(nx * side))
    failed = grid.mean_snr.copy()
    rng = stream_rng(seed, STREAM_FAILURE, instance)
    failed[:fy, :fx] = rng.uniform(failed_range[0], failed_range[1], size=(fy, fx))
    return VenueGrid(
        width_m=grid.width_m,
        height_m=grid.height_m,
        mean_snr=grid.mean_snr,
        sigma_db=grid.sigma_db,
        failure_mean_snr=failed,
        failure_start=t_start,
        failure_end=t_end,
    )


@dataclass
class Scenario:
    """Scenario configuration; see ScenarioTrace for the realization."""

    kind: Literal["homogeneous", "stadium", "failure"]
    m: int = 20000
    duration: int = 150
    interval_seconds: float = 12.0
    seed: int = 0
    instance: int = 0
    sigma_db: float = 5.0
    width_m: float = 1000.0
    height_m: float = 1000.0
    traverse_intervals: int = 75          # one-way back-and-forth leg, 15 min
    stadium_walk_in: int = 60             # 12 min in
    stadium_hold: int = 15                # 3 min at center
    stadium_walk_out: int = 60            # 12 min out
    stadium_center_fraction: float = 0.5
    failure_start: int = 50
    failure_end: int = 75
    failure_region_fraction: float = 0.25
    snr_offset_db: float = 0.0            # additive shift of the whole field

    def __post_init__(self):
        if self.kind not in ("homogeneous", "stadium", "failure"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.m <= 0:
            raise ValueError("m must be positive")
        if self.kind == "failure" and not (0 <= self.failure_start < self.failure_end <= self.duration):
            raise ValueError("failure window must lie within the run duration")


class ScenarioTrace:
    """Realized scenario: grid, waypoints and activity windows.

    Positions and activity are pure functions of the interval index; only
    the SNR draws consume RNG state during stepping.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        s = scenario
        if s.kind == "homogeneous":
            self.grid = gen_homogeneous(s.seed, s.width_m, s.height_m, sigma_db=s.sigma_db, instance=s.instance)
        elif s.kind == "stadium":
            self.grid = gen_stadium(
                s.seed, s.width_m, s.height_m,
                center_fraction=s.stadium_center_fraction,
                sigma_db=s.sigma_db, instance=s.instance,
            )
        else:
            base = gen_failure_base(s.seed, s.width_m, s.height_m, sigma_db=s.sigma_db, instance=s.instance)
            self.grid = apply_failure(
                base, s.failure_start, s.failure_end, s.duration, s.seed,
                region_fraction=s.failure_region_fraction, instance=s.instance,
            )
        if s.snr_offset_db:
            self.grid.mean_snr = self.grid.mean_snr + s.snr_offset_db
            if self.grid.failure_mean_snr is not None:
                self.grid.failure_mean_snr = self.grid.failure_mean_snr + s.snr_offset_db

        wp_rng = stream_rng(s.seed, STREAM_WAYPOINTS, s.instance)
        act_rng = stream_rng(s.seed, STREAM_ACTIVITY, s.instance)
        m = s.m
        if s.kind == "stadium":
            # edge waypoint on a random venue border, center waypoint in the
            # central square
            edge = np.empty((m, 2))
            side = wp_rng.integers(0, 4, size=m)
            along = wp_rng.uniform(0.0, 1.0, size=m)
            along_x = along * s.width_m
            along_y = along * s.height_m
            edge[:, 0] = np.where(side == 0, along_x, np.where(side == 1, along_x, np.where(side == 2, 0.0, s.width_m - 1e-9)))
            edge[:, 1] = np.where(side == 0, 0.0, np.where(side == 1, s.height_m - 1e-9, along_y))
            half = s.stadium_center_fraction / 2.0
            cx = wp_rng.uniform((0.5 - half) * s.width_m, (0.5 + half) * s.width_m, size=m)
            cy = wp_rng.uniform((0.5 - half) * s.height_m, (0.5 + half) * s.height_m, size=m)
            self.wp_a = edge
            self.wp_b = np.column_stack([cx, cy])
            # staggered activation tracing the 10% -> 100% -> 10% ramp
            n_always = int(round(0.1 * m))
            self.always_active = np.zeros(m, dtype=bool)
            self.always_active[act_rng.choice(m, size=n_always, replace=False)] = True
            u = act_rng.uniform(0.0, 1.0, size=m)
            walk_end = s.stadium_walk_in + s.stadium_hold + s.stadium_walk_out
            self.join_t = s.stadium_walk_in * u
            self.leave_t = walk_end - s.stadium_walk_out * u
        else:
            self.wp_a = np.column_stack([
                wp_rng.uniform(0.0, s.width_m, size=m),
                wp_rng.uniform(0.0, s.height_m, size=m),
            ])
            self.wp_b = np.column_stack([
                wp_rng.uniform(0.0, s.width_m, size=m),
                wp_rng.uniform(0.0, s.height_m, size=m),
            ])
            n_always = int(round(0.5 * m))
            self.always_active = np.zeros(m, dtype=bool)
            self.always_active[act_rng.choice(m, size=n_always, replace=False)] = True
            w1 = act_rng.uniform(0.0, s.duration, size=m)
            w2 = act_rng.uniform(0.0, s.duration, size=m)
            self.join_t = np.minimum(w1, w2)
            self.leave_t = np.maximum(w1, w2)

    # -- mobility ----------------------------------------------------------

    def _phase(self, t: int) -> np.ndarray | float:
        s = self.scenario
        if s.kind == "stadium":
            t_in = s.stadium_walk_in
            t_hold_end = t_in + s.stadium_hold
            t_out_end = t_hold_end + s.stadium_walk_out
            if t < t_in:
                return t / t_in
            if t < t_hold_end:
                return 1.0
            if t < t_out_end:
                return 1.0 - (t - t_hold_end) / s.stadium_walk_out
            return 0.0
        # triangle wave over the back-and-forth traverse
        period = 2 * s.traverse_intervals
        tau = t % period
        if tau <= s.traverse_intervals:
            return tau / s.traverse_intervals
        return 2.0 - tau / s.traverse_intervals

    def positions(self, t: int) -> np.ndarray:
        """All UE positions (m, 2) at interval t."""
        phase = self._phase(t)
        return self.wp_a + (self.wp_b - self.wp_a) * phase

    def active_mask(self, t: int) -> np.ndarray:
        return self.always_active | ((self.join_t <= t) & (t < self.leave_t))

    def active_count(self, t: int) -> int:
        return int(np.count_nonzero(self.active_mask(t)))

    def mean_active_count(self) -> float:
        return float(np.mean([self.active_count(t) for t in range(self.scenario.duration)]))

    # -- SNR ---------------------------------------------------------------

    def cell_means(self, t: int) -> np.ndarray:
        """Per-UE cell mean SNR at interval t."""
        means = self.grid.means_at(t)
        pos = self.positions(t)
        row, col = self.grid.cell_index(pos[:, 0], pos[:, 1])
        return means[row, col]

    def draw_snr(self, t: int, rng: np.random.Generator) -> np.ndarray:
        """Raw (unquantized) SNR draws for all m UEs at interval t."""
        mu = self.cell_means(t)
        if self.scenario.sigma_db == 0.0:
            return mu.copy()
        return mu + self.scenario.sigma_db * rng.standard_normal(self.scenario.m)


# -- spec-level single-UE helpers ------------------------------------------

def sample_ue_snr(grid: VenueGrid, position: tuple[float, float], t: int, rng: np.random.Generator) -> float:
    """One Gaussian SNR draw at a position, quantized to 0.1 dB."""
    from .snr import quantize, tick_to_db

    row, col = grid.cell_index(np.asarray([position[0]]), np.asarray([position[1]]))
    mu = float(grid.means_at(t)[row[0], col[0]])
    raw = mu if grid.sigma_db == 0.0 else mu + grid.sigma_db * float(rng.standard_normal())
    return tick_to_db(quantize(raw))


def mobility_step(trace: ScenarioTrace, ue: int, t: int) -> tuple[float, float]:
    """Position of one UE at interval t."""
    if t >= trace.scenario.duration:
        raise ValueError(f"t={t} beyond scenario duration {trace.scenario.duration}")
    pos = trace.positions(t)[ue]
    return float(pos[0]), float(pos[1])


def activity_schedule(trace: ScenarioTrace, ue: int, t: int) -> bool:
    """Whether one UE is active at interval t."""
    return bool(trace.active_mask(t)[ue])


def dump_heatmap(grid: VenueGrid, fp: IO[str], times: list[int] = [0]) -> None:
    """CSV dump of (cell_x, cell_y, mean_dB, t) for rendering heatmaps."""
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(["cell_x", "cell_y", "mean_db", "t"])
    for t in times:
        means = grid.means_at(t)
        ny, nx = means.shape
        for cy in range(ny):
            for cx in range(nx):
                writer.writerow([cx, cy, repr(float(means[cy, cx])), t])
