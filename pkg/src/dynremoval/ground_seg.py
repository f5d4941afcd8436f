"""Ground labeling by inter-ring slope on a spinning-LiDAR range image.

Row 0 is the lowest ring. For each azimuth column the segment between
vertically adjacent occupied cells is tested: if its elevation angle is
within ``angle_threshold`` of horizontal, both endpoints are ground.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .core import GroundLabel, Sweep
from .errors import ConfigError

EMPTY = -1


@dataclass(frozen=True)
class GroundSegConfig:
    rows: int = 64
    cols: int = 1800
    vertical_fov: tuple[float, float] = (-24.9, 2.0)
    # None selects the rings whose beam points below the horizon.
    ground_rows: int | None = None
    angle_threshold: float = 10.0
    sensor_mount_angle: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "vertical_fov", tuple(float(v) for v in self.vertical_fov))
        if self.rows < 2 or self.cols < 8:
            raise ConfigError("ground_seg needs rows >= 2 and cols >= 8")
        if not 0.0 < self.angle_threshold < 45.0:
            raise ConfigError("angle_threshold must lie in (0, 45) degrees")
        if self.ground_rows is not None and not 0 <= self.ground_rows <= self.rows:
            raise ConfigError("ground_rows must lie in [0, rows]")

    def resolved_ground_rows(self) -> int:
        if self.ground_rows is not None:
            return self.ground_rows
        lo, hi = self.vertical_fov
        if lo >= hi:
            return self.rows // 2
        elev = np.linspace(lo, hi, self.rows)
        return int(np.count_nonzero(elev < 0.0))


@dataclass
class RangeImage:
    """``index[r, c]`` holds the winning point's row in the sweep or -1."""

    index: np.ndarray
    range: np.ndarray
    point_row: np.ndarray
    point_col: np.ndarray

    @property
    def rows(self) -> int:
        return self.index.shape[0]

    @property
    def cols(self) -> int:
        return self.index.shape[1]


@numba.njit(cache=True)
def _fill(points, rings, has_rings, rows, cols, fov_lo, fov_hi):
    n = points.shape[0]
    index = np.full((rows, cols), -1, np.int64)
    rng_img = np.full((rows, cols), np.inf)
    prow = np.empty(n, np.int64)
    pcol = np.empty(n, np.int64)
    two_pi = 2.0 * math.pi
    for i in range(n):
        x = points[i, 0]
        y = points[i, 1]
        z = points[i, 2]
        rxy = math.sqrt(x * x + y * y)
        r = math.sqrt(rxy * rxy + z * z)
        if has_rings:
            row = rings[i]
        else:
            elev = math.degrees(math.atan2(z, rxy))
            row = int(math.floor((elev - fov_lo) / (fov_hi - fov_lo) * (rows - 1) + 0.5))
        if row < 0:
            row = 0
        elif row > rows - 1:
            row = rows - 1
        col = int(math.floor((math.atan2(y, x) + math.pi) / two_pi * cols))
        if col < 0:
            col = 0
        elif col > cols - 1:
            col = cols - 1
        prow[i] = row
        pcol[i] = col
        if r < rng_img[row, col]:
            rng_img[row, col] = r
            index[row, col] = i
    return index, rng_img, prow, pcol


@numba.njit(cache=True)
def _fit(points, index, ground_rows, mount_rad, threshold_rad):
    rows, cols = index.shape
    out = np.zeros(points.shape[0], np.uint8)
    top = min(ground_rows, rows - 1)
    for c in range(cols):
        for r in range(top):
            a = index[r, c]
            b = index[r + 1, c]
            if a < 0 or b < 0:
                continue
            dx = points[b, 0] - points[a, 0]
            dy = points[b, 1] - points[a, 1]
            dz = points[b, 2] - points[a, 2]
            angle = math.atan2(dz, math.sqrt(dx * dx + dy * dy)) - mount_rad
            if abs(angle) <= threshold_rad:
                out[a] = 1
                out[b] = 1
    return out


def project(sweep: Sweep, rows: int, cols: int, vertical_fov=(-24.9, 2.0)) -> RangeImage:
    """Scatter the sweep into a ``rows x cols`` range image, nearest point per cell."""
    if rows < 2 or cols < 8:
        raise ConfigError("range image needs rows >= 2 and cols >= 8")
    lo, hi = float(vertical_fov[0]), float(vertical_fov[1])
    has_rings = sweep.rings is not None
    if not has_rings and lo >= hi:
        raise ConfigError(f"degenerate vertical_fov {vertical_fov} and no ring field")
    rings = sweep.rings if has_rings else np.zeros(0, np.int64)
    index, rng, prow, pcol = _fill(
        np.ascontiguousarray(sweep.points), rings, has_rings, rows, cols, lo, hi
    )
    return RangeImage(index, rng, prow, pcol)


def fit_ground(
    img: RangeImage,
    points: np.ndarray,
    ground_rows: int,
    angle_threshold: float = 10.0,
    sensor_mount_angle: float = 0.0,
) -> np.ndarray:
    """Return a ``GroundLabel`` code per point (``uint8``: 1 ground, 0 not)."""
    if ground_rows > img.rows:
        raise ConfigError("ground_rows exceeds image rows")
    if len(points) == 0:
        return np.zeros(0, np.uint8)
    return _fit(
        np.ascontiguousarray(points, dtype=np.float64),
        img.index,
        int(ground_rows),
        math.radians(sensor_mount_angle),
        math.radians(angle_threshold),
    )


def label_ground(sweep: Sweep, cfg: GroundSegConfig) -> np.ndarray:
    if len(sweep) == 0:
        return np.zeros(0, np.uint8)
    img = project(sweep, cfg.rows, cfg.cols, cfg.vertical_fov)
    return fit_ground(
        img, sweep.points, cfg.resolved_ground_rows(), cfg.angle_threshold, cfg.sensor_mount_angle
    )


__all__ = [
    "EMPTY",
    "GroundLabel",
    "GroundSegConfig",
    "RangeImage",
    "fit_ground",
    "label_ground",
    "project",
]
