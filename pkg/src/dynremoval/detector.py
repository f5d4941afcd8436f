"""Label-consistency classification of non-ground points.

A non-ground point is judged by the ground/non-ground makeup of the map
points sharing its voxel. Near points (fore) with too few neighbors are
dynamic; far points (back) with too few neighbors are deferred as
undetermined and settled later, either when the platform comes within
range or after a run of sweeps spent far away.

Two orientations of the ratio test are available:

``literal``
    static iff the non-ground share of neighbors is below
    ``nonground_ratio_threshold``.
``reconciled`` (default)
    dynamic iff the ground share of neighbors exceeds
    ``ground_ratio_cutoff``; a non-ground point landing among mostly
    non-ground map points coincides with existing structure and is static.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import GroundLabel, PointClass
from .errors import ConfigError
from .voxel_map import VoxelMap


class RatioRule(str, enum.Enum):
    LITERAL = "literal"
    RECONCILED = "reconciled"


class Reason(enum.IntEnum):
    NO_NEIGHBORS = 0
    RATIO_LOW = 1
    RATIO_HIGH = 2
    BACK_NO_NEIGHBORS = 3
    TIMEOUT_STATIC = 4
    GROUND = 5
    BOOTSTRAP = 6


_REASON_CLASS = {
    Reason.NO_NEIGHBORS: PointClass.DYNAMIC,
    Reason.RATIO_LOW: PointClass.STATIC,
    Reason.RATIO_HIGH: PointClass.DYNAMIC,
    Reason.BACK_NO_NEIGHBORS: PointClass.UNDETERMINED,
    Reason.TIMEOUT_STATIC: PointClass.STATIC,
    Reason.GROUND: PointClass.STATIC,
    Reason.BOOTSTRAP: PointClass.STATIC,
}


@dataclass(frozen=True)
class DetectorConfig:
    fore_back_threshold: float = 30.0
    min_neighbors: int = 5
    nonground_ratio_threshold: float = 0.30
    undetermined_max_far_sweeps: int = 10
    ratio_rule: RatioRule = RatioRule.RECONCILED
    ground_ratio_cutoff: float = 0.70
    rollback_tracking: bool = False

    def __post_init__(self):
        try:
            object.__setattr__(self, "ratio_rule", RatioRule(self.ratio_rule))
        except ValueError:
            raise ConfigError(f"unknown ratio_rule {self.ratio_rule!r}") from None
        if not self.fore_back_threshold > 0:
            raise ConfigError("fore_back_threshold must be positive")
        if self.min_neighbors < 1:
            raise ConfigError("min_neighbors must be >= 1")
        if not 0 < self.nonground_ratio_threshold < 1:
            raise ConfigError("nonground_ratio_threshold must lie in (0, 1)")
        if not 0 < self.ground_ratio_cutoff < 1:
            raise ConfigError("ground_ratio_cutoff must lie in (0, 1)")
        if self.undetermined_max_far_sweeps < 1:
            raise ConfigError("undetermined_max_far_sweeps must be >= 1")


@dataclass(frozen=True)
class Verdict:
    point_class: PointClass
    reason: Reason

    def __post_init__(self):
        if _REASON_CLASS[self.reason] is not self.point_class:
            raise ValueError(f"reason {self.reason.name} inconsistent with {self.point_class.name}")


class Region(enum.IntEnum):
    FORE = 0
    BACK = 1


def separate(p_world, platform_position, cfg: DetectorConfig) -> Region:
    d = np.linalg.norm(np.asarray(p_world, np.float64) - np.asarray(platform_position, np.float64))
    return Region.FORE if d <= cfg.fore_back_threshold else Region.BACK


def is_back(points_world: np.ndarray, platform_position, cfg: DetectorConfig) -> np.ndarray:
    d = np.linalg.norm(np.asarray(points_world) - np.asarray(platform_position, np.float64), axis=1)
    return d > cfg.fore_back_threshold


def ratio_is_dynamic(count: np.ndarray, nonground: np.ndarray, cfg: DetectorConfig) -> np.ndarray:
    """Ratio test for neighbor sets that already meet ``min_neighbors``."""
    count = np.asarray(count)
    nonground = np.asarray(nonground)
    n = np.maximum(count, 1)
    if cfg.ratio_rule is RatioRule.LITERAL:
        return ~(nonground / n < cfg.nonground_ratio_threshold)
    return (count - nonground) / n > cfg.ground_ratio_cutoff


def classify_counts(count, nonground, back, cfg: DetectorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized classification; returns ``(PointClass codes, Reason codes)`` as int8."""
    count = np.asarray(count)
    back = np.broadcast_to(np.asarray(back, dtype=bool), count.shape)
    sparse = count < cfg.min_neighbors
    dyn = ratio_is_dynamic(count, nonground, cfg)
    cls = np.where(dyn, PointClass.DYNAMIC, PointClass.STATIC).astype(np.int8)
    reason = np.where(dyn, Reason.RATIO_HIGH, Reason.RATIO_LOW).astype(np.int8)
    cls[sparse & ~back] = PointClass.DYNAMIC
    reason[sparse & ~back] = Reason.NO_NEIGHBORS
    cls[sparse & back] = PointClass.UNDETERMINED
    reason[sparse & back] = Reason.BACK_NO_NEIGHBORS
    return cls, reason


def _counts(neighbors) -> tuple[int, int]:
    n = len(neighbors)
    ng = sum(1 for _, lbl in neighbors if GroundLabel(lbl) is GroundLabel.NON_GROUND)
    return n, ng


def _verdict(n: int, ng: int, back: bool, cfg: DetectorConfig) -> Verdict:
    cls, reason = classify_counts(np.array([n]), np.array([ng]), back, cfg)
    return Verdict(PointClass(int(cls[0])), Reason(int(reason[0])))


def classify_fore(neighbors, cfg: DetectorConfig) -> Verdict:
    return _verdict(*_counts(neighbors), False, cfg)


def classify_back(neighbors, cfg: DetectorConfig) -> Verdict:
    return _verdict(*_counts(neighbors), True, cfg)


@dataclass(frozen=True)
class UndeterminedEntry:
    position_world: tuple[float, float, float]
    far_sweep_count: int
    birth_sweep: int
    point_id: int = -1


@dataclass
class Resolution:
    """Entries settled during one call to :func:`resolve_undetermined`."""

    point_id: np.ndarray
    position: np.ndarray
    point_class: np.ndarray
    reason: np.ndarray
    in_tracking: np.ndarray

    def __len__(self) -> int:
        return len(self.point_id)

    def verdicts(self) -> list[Verdict]:
        return [Verdict(PointClass(int(c)), Reason(int(r))) for c, r in zip(self.point_class, self.reason)]


class UndeterminedContainer:
    """Deferred back-points, stored column-wise."""

    def __init__(self):
        self.position = np.zeros((0, 3))
        self.far_count = np.zeros(0, np.int64)
        self.birth = np.zeros(0, np.int64)
        self.point_id = np.zeros(0, np.int64)
        self.in_tracking = np.zeros(0, bool)

    def __len__(self) -> int:
        return len(self.birth)

    def add(self, positions, birth_sweep: int, point_ids=None, in_tracking=None):
        positions = np.asarray(positions, np.float64).reshape(-1, 3)
        m = len(positions)
        if point_ids is None:
            point_ids = np.full(m, -1, np.int64)
        if in_tracking is None:
            in_tracking = np.zeros(m, bool)
        self.position = np.concatenate([self.position, positions])
        self.far_count = np.concatenate([self.far_count, np.zeros(m, np.int64)])
        self.birth = np.concatenate([self.birth, np.full(m, birth_sweep, np.int64)])
        self.point_id = np.concatenate([self.point_id, np.asarray(point_ids, np.int64)])
        self.in_tracking = np.concatenate([self.in_tracking, np.asarray(in_tracking, bool)])

    def entries(self) -> list[UndeterminedEntry]:
        return [
            UndeterminedEntry(tuple(map(float, p)), int(c), int(b), int(i))
            for p, c, b, i in zip(self.position, self.far_count, self.birth, self.point_id)
        ]

    def _take(self, mask: np.ndarray):
        for name in ("position", "far_count", "birth", "point_id", "in_tracking"):
            setattr(self, name, getattr(self, name)[mask])


def resolve_undetermined(
    container: UndeterminedContainer,
    platform_position,
    tracking_map: VoxelMap,
    cfg: DetectorConfig,
    current_sweep: int | None = None,
) -> Resolution:
    """Settle entries that came within range or stayed far long enough.

    Entries born on ``current_sweep`` are skipped; their first far sweep is
    the one after birth. Settled entries are removed from the container.
    """
    n = len(container)
    if n == 0:
        empty = np.zeros(0, np.int64)
        return Resolution(empty, np.zeros((0, 3)), empty.astype(np.int8), empty.astype(np.int8), empty.astype(bool))

    active = np.ones(n, bool) if current_sweep is None else container.birth != current_sweep
    near = active & ~is_back(container.position, platform_position, cfg)
    far = active & ~near

    cls = np.full(n, -1, np.int8)
    reason = np.full(n, -1, np.int8)
    if near.any():
        count, ng = tracking_map.neighbor_counts(container.position[near])
        c, r = classify_counts(count, ng, False, cfg)
        cls[near] = c
        reason[near] = r

    container.far_count[far] += 1
    timeout = far & (container.far_count >= cfg.undetermined_max_far_sweeps)
    cls[timeout] = PointClass.STATIC
    reason[timeout] = Reason.TIMEOUT_STATIC

    done = near | timeout
    res = Resolution(
        container.point_id[done].copy(),
        container.position[done].copy(),
        cls[done],
        reason[done],
        container.in_tracking[done].copy(),
    )
    container._take(~done)
    return res
