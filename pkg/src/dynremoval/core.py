"""Geometry primitives and per-point domain types.

Poses follow the ``T_ab`` convention: a pose maps coordinates expressed in
frame ``b`` into frame ``a`` via ``p_a = R @ p_b + t``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import PoseError

ORTHO_TOL = 1e-6
# Largest deviation from orthonormality that normalization will silently repair.
NORMALIZE_TOL = 1e-3
DEFAULT_MIN_RANGE = 0.5


class Point3(NamedTuple):
    x: float
    y: float
    z: float


class GroundLabel(enum.IntEnum):
    NON_GROUND = 0
    GROUND = 1


class PointClass(enum.IntEnum):
    STATIC = 0
    DYNAMIC = 1
    UNDETERMINED = 2


# Sentinel for "no class assigned yet" in integer class arrays.
UNSET = -1


def _polar(rotation: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(rotation)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    return r


def _ortho_error(rotation: np.ndarray) -> float:
    return float(np.abs(rotation.T @ rotation - np.eye(3)).max())


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform stored as a rotation matrix plus translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.isfinite(r).all() and np.isfinite(t).all()):
            raise PoseError("pose contains non-finite values")
        if _ortho_error(r) > ORTHO_TOL or np.linalg.det(r) <= 0:
            raise PoseError("rotation is not orthonormal with determinant +1")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_rt(cls, rotation, translation, normalize: bool = True) -> Pose:
        """Build a pose, projecting a slightly drifted rotation back onto SO(3).

        Rotations further than ``NORMALIZE_TOL`` from orthonormal, or with a
        negative determinant, raise :class:`PoseError` instead of being fixed.
        """
        r = np.asarray(rotation, dtype=np.float64).reshape(3, 3)
        if not np.isfinite(r).all():
            raise PoseError("pose contains non-finite values")
        if normalize and _ortho_error(r) > ORTHO_TOL:
            if _ortho_error(r) > NORMALIZE_TOL or np.linalg.det(r) <= 0:
                raise PoseError("rotation too far from SO(3) to normalize")
            r = _polar(r)
        return cls(r, translation)

    @classmethod
    def from_matrix(cls, matrix, normalize: bool = True) -> Pose:
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape not in ((3, 4), (4, 4)):
            raise PoseError(f"expected a 3x4 or 4x4 matrix, got {m.shape}")
        return cls.from_rt(m[:3, :3], m[:3, 3], normalize=normalize)

    @classmethod
    def from_quaternion(cls, qxyzw, translation) -> Pose:
        q = np.asarray(qxyzw, dtype=np.float64)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n == 0:
            raise PoseError("degenerate quaternion")
        x, y, z, w = q / n
        r = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
                [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
                [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
            ]
        )
        return cls.from_rt(r, translation)

    @classmethod
    def from_xyz_yaw(cls, x: float, y: float, z: float, yaw_deg: float = 0.0) -> Pose:
        c, s = np.cos(np.radians(yaw_deg)), np.sin(np.radians(yaw_deg))
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), (x, y, z))

    def orthonormalized(self) -> Pose:
        """Same pose with the rotation projected exactly onto SO(3)."""
        return Pose(_polar(self.rotation), self.translation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> Pose:
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an ``(N, 3)`` array of points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def __matmul__(self, other: Pose) -> Pose:
        return compose(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation)

    def __hash__(self) -> int:
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    def __repr__(self) -> str:
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def transform_point(p, pose: Pose) -> Point3:
    q = pose.rotation @ np.asarray(p, dtype=np.float64) + pose.translation
    return Point3(float(q[0]), float(q[1]), float(q[2]))


def compose(a: Pose, b: Pose) -> Pose:
    """Pose that applies ``b`` first, then ``a``."""
    r = a.rotation @ b.rotation
    if _ortho_error(r) > ORTHO_TOL:
        r = _polar(r)
    return Pose(r, a.rotation @ b.translation + a.translation)


def inverse(pose: Pose) -> Pose:
    return pose.inverse()


@dataclass(frozen=True)
class LabeledPoint:
    position_sensor: Point3
    position_world: Point3
    ground_label: GroundLabel
    point_class: PointClass | None
    ring: int
    range: float


@dataclass(eq=False)
class Sweep:
    """One LiDAR revolution in the sensor frame.

    ``rings`` is optional (KITTI ``.bin`` files carry none). ``source_index``
    maps each row back to its position in the raw file and survives
    validation and downsampling so verdicts can be joined with labels.
    """

    index: int
    points: np.ndarray
    pose_world_lidar: Pose
    rings: np.ndarray | None = None
    source_index: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        n = len(self.points)
        if self.rings is not None:
            self.rings = np.asarray(self.rings, dtype=np.int64).reshape(n)
        if self.source_index is None:
            self.source_index = np.arange(n, dtype=np.int64)
        else:
            self.source_index = np.asarray(self.source_index, dtype=np.int64).reshape(n)
        if self.index < 0:
            raise ValueError("sweep index must be non-negative")

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, mask_or_index) -> Sweep:
        return Sweep(
            self.index,
            self.points[mask_or_index],
            self.pose_world_lidar,
            None if self.rings is None else self.rings[mask_or_index],
            self.source_index[mask_or_index],
        )

    def validated(self, min_range: float = DEFAULT_MIN_RANGE) -> Sweep:
        """Drop non-finite points and self-returns closer than ``min_range``."""
        finite = np.isfinite(self.points).all(axis=1)
        rng = np.linalg.norm(np.where(finite[:, None], self.points, 0.0), axis=1)
        keep = finite & (rng >= min_range)
        if keep.all():
            return self
        return self.subset(keep)
