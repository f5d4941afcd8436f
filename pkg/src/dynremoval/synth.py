"""Synthetic driving scenes raycast into labeled sweeps.

A scene is a ground plane, static boxes (walls, buildings) and boxes moving
at constant velocity on the ground. One ray is cast per (ring, azimuth bin)
from the platform pose; the nearest hit wins. Points on boxes with nonzero
velocity are tagged dynamic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .core import Pose, Sweep
from .errors import ConfigError

GROUND_HEIGHT_TOL = 1e-6


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    yaw: float = 0.0
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "size", tuple(float(v) for v in self.size))
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        if len(self.center) != 3 or len(self.size) != 3 or len(self.velocity) != 3:
            raise ConfigError("box center, size and velocity need 3 components")
        if min(self.size) <= 0:
            raise ConfigError("box size must be positive")

    @property
    def moving(self) -> bool:
        return any(v != 0.0 for v in self.velocity)

    def at(self, t: float) -> Box:
        c = tuple(c + v * t for c, v in zip(self.center, self.velocity))
        return Box(c, self.size, self.yaw, self.velocity)


@dataclass(frozen=True)
class SensorSpec:
    rings: int = 64
    vertical_fov: tuple[float, float] = (-24.9, 2.0)
    azimuth_bins: int = 1800
    max_range: float = 80.0
    rate_hz: float = 10.0
    range_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "vertical_fov", tuple(float(v) for v in self.vertical_fov))
        lo, hi = self.vertical_fov
        if self.rings < 1 or self.azimuth_bins < 1:
            raise ConfigError("sensor needs at least one ring and one azimuth bin")
        if self.rings > 1 and not lo < hi:
            raise ConfigError(f"degenerate vertical_fov {self.vertical_fov}")
        if not self.max_range > 0 or not self.rate_hz > 0:
            raise ConfigError("max_range and rate_hz must be positive")
        if self.range_noise < 0:
            raise ConfigError("range_noise must be >= 0")

    def elevations(self) -> np.ndarray:
        lo, hi = self.vertical_fov
        if self.rings == 1:
            return np.array([np.radians(lo)])
        return np.radians(np.linspace(lo, hi, self.rings))

    def azimuths(self) -> np.ndarray:
        # Bin centers so each ray lands in its own range-image column.
        n = self.azimuth_bins
        return -np.pi + (np.arange(n) + 0.5) * (2 * np.pi / n)

    def ground_seg_params(self) -> dict:
        return {"rows": self.rings, "cols": self.azimuth_bins, "vertical_fov": list(self.vertical_fov)}


@dataclass(frozen=True)
class SceneSpec:
    ground_height: float | None = -1.73
    static_boxes: tuple[Box, ...] = ()
    dynamic_boxes: tuple[Box, ...] = ()
    sensor: SensorSpec = field(default_factory=SensorSpec)
    trajectory: tuple[Pose, ...] = ()
    # Used when the sweep index runs past the explicit trajectory.
    start: tuple[float, float, float] = (0.0, 0.0, 0.0)
    step: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "static_boxes", tuple(self.static_boxes))
        object.__setattr__(self, "dynamic_boxes", tuple(self.dynamic_boxes))
        object.__setattr__(self, "trajectory", tuple(self.trajectory))
        if self.ground_height is not None:
            for b in self.dynamic_boxes:
                bottom = b.center[2] - b.size[2] / 2
                if abs(bottom - self.ground_height) > GROUND_HEIGHT_TOL:
                    raise ConfigError(
                        f"dynamic box at {b.center} does not rest on the ground (bottom z={bottom})"
                    )

    def pose(self, sweep_index: int) -> Pose:
        if sweep_index < len(self.trajectory):
            return self.trajectory[sweep_index]
        p = np.asarray(self.start) + sweep_index * np.asarray(self.step)
        return Pose.from_xyz_yaw(*p)

    def boxes_at(self, sweep_index: int) -> list[tuple[Box, bool, bool]]:
        """``(box, moving, static_structure)`` for every box at this sweep."""
        t = sweep_index / self.sensor.rate_hz
        out = [(b, False, True) for b in self.static_boxes]
        out += [(b.at(t), b.moving, False) for b in self.dynamic_boxes]
        return out


def ray_plane(origin, dirs: np.ndarray, height: float) -> np.ndarray:
    """Distance along unit ``dirs`` to the plane ``z = height``; inf when missed."""
    dz = dirs[:, 2]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t = (height - origin[2]) / dz
    return np.where((dz != 0) & (t > 0), t, np.inf)


def ray_box(origin, dirs: np.ndarray, box: Box) -> np.ndarray:
    """Slab-test distance from ``origin`` along ``dirs`` to an oriented box; inf when missed.

    Rays starting inside the box report the exit distance.
    """
    c, s = np.cos(np.radians(box.yaw)), np.sin(np.radians(box.yaw))
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    o = rot.T @ (np.asarray(origin, np.float64) - np.asarray(box.center))
    d = dirs @ rot
    half = np.asarray(box.size) / 2
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inv = 1.0 / d
        t1 = (-half - o) * inv
        t2 = (half - o) * inv
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    # Rays parallel to a slab: inside -> unbounded, outside -> miss.
    par = d == 0
    inside = np.abs(o) <= half
    lo = np.where(par, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(par, np.where(inside, np.inf, -np.inf), hi)
    t_near = lo.max(axis=1)
    t_far = hi.min(axis=1)
    hit = (t_near <= t_far) & (t_far > 0)
    t = np.where(t_near > 0, t_near, t_far)
    return np.where(hit, t, np.inf)


@dataclass
class SynthSweep:
    sweep: Sweep
    dynamic: np.ndarray
    semantic: np.ndarray


# Semantic-KITTI ids used when writing labels.
ROAD, BUILDING, CAR, MOVING_CAR = 40, 50, 10, 252


def raycast_sweep(spec: SceneSpec, sweep_index: int) -> SynthSweep:
    sensor = spec.sensor
    pose = spec.pose(sweep_index)
    elev = sensor.elevations()
    az = sensor.azimuths()
    ring_idx, az_idx = np.meshgrid(np.arange(len(elev)), np.arange(len(az)), indexing="ij")
    ring_idx = ring_idx.ravel()
    e = elev[ring_idx]
    a = az[az_idx.ravel()]
    dirs_l = np.stack([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)], axis=1)
    dirs_w = dirs_l @ pose.rotation.T
    origin = pose.translation

    best = np.full(len(dirs_w), np.inf)
    sem = np.full(len(dirs_w), ROAD, np.int64)
    dyn = np.zeros(len(dirs_w), bool)
    if spec.ground_height is not None:
        best = ray_plane(origin, dirs_w, spec.ground_height)
    for box, moving, structure in spec.boxes_at(sweep_index):
        t = ray_box(origin, dirs_w, box)
        closer = t < best
        best[closer] = t[closer]
        dyn[closer] = moving
        sem[closer] = BUILDING if structure else (MOVING_CAR if moving else CAR)

    if sensor.range_noise > 0:
        rng = np.random.default_rng((sensor.seed, sweep_index))
        best = best + rng.normal(0.0, sensor.range_noise, len(best))
    keep = np.isfinite(best) & (best > 0) & (best <= sensor.max_range)
    pts = dirs_l[keep] * best[keep, None]
    sweep = Sweep(sweep_index, pts, pose, rings=ring_idx[keep])
    return SynthSweep(sweep, dyn[keep], sem[keep])


def _box(d: dict) -> Box:
    unknown = set(d) - {"center", "size", "yaw", "velocity"}
    if unknown:
        raise ConfigError(f"unknown box key(s): {', '.join(sorted(unknown))}")
    return Box(**d)


def scene_from_dict(tree: dict) -> SceneSpec:
    allowed = {"ground_height", "static_boxes", "dynamic_boxes", "sensor", "trajectory"}
    unknown = set(tree) - allowed
    if unknown:
        raise ConfigError(f"unknown scene key(s): {', '.join(sorted(unknown))}")
    try:
        sensor = SensorSpec(**tree.get("sensor", {}))
        traj = tree.get("trajectory", {}) or {}
        poses = tuple(Pose.from_xyz_yaw(*p) for p in traj.get("poses", []))
        extra = set(traj) - {"poses", "start", "step"}
        if extra:
            raise ConfigError(f"unknown trajectory key(s): {', '.join(sorted(extra))}")
        return SceneSpec(
            ground_height=tree.get("ground_height", -1.73),
            static_boxes=tuple(_box(b) for b in tree.get("static_boxes", []) or []),
            dynamic_boxes=tuple(_box(b) for b in tree.get("dynamic_boxes", []) or []),
            sensor=sensor,
            trajectory=poses,
            start=tuple(traj.get("start", (0.0, 0.0, 0.0))),
            step=tuple(traj.get("step", (0.0, 0.0, 0.0))),
        )
    except TypeError as e:
        raise ConfigError(str(e)) from None


def load_scene(path: str | Path) -> SceneSpec:
    try:
        tree = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"{path}: {e}") from None
    if not isinstance(tree, dict):
        raise ConfigError(f"{path}: scene must be a mapping")
    try:
        return scene_from_dict(tree)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from None


def driving_scene(n_walls: int = 4) -> SceneSpec:
    """Straight road lined by walls with three vehicles; used by tests and the README."""
    g = -1.73
    walls = [
        Box((35.0, 13.0, g + 3.0), (140.0, 1.0, 6.0)),
        Box((35.0, -13.0, g + 3.0), (140.0, 1.0, 6.0)),
        Box((110.0, 0.0, g + 3.0), (1.0, 27.0, 6.0)),
        Box((-40.0, 0.0, g + 3.0), (1.0, 27.0, 6.0)),
    ][:n_walls]
    cars = [
        # Trucks crossing the road, hidden behind the walls outside |y| < 12.5;
        # they emerge near sweeps 5 and 15.
        Box((20.0, -21.5, g + 1.5), (8.0, 2.5, 3.0), velocity=(0.0, 15.0, 0.0)),
        Box((35.0, 36.5, g + 1.5), (8.0, 2.5, 3.0), velocity=(0.0, -15.0, 0.0)),
        # cyclist-sized box emerging near sweep 30
        Box((55.0, -44.0, g + 0.95), (2.0, 0.8, 1.9), velocity=(0.0, 10.0, 0.0)),
    ]
    return SceneSpec(
        ground_height=g,
        static_boxes=tuple(walls),
        dynamic_boxes=tuple(cars),
        sensor=SensorSpec(),
        step=(1.0, 0.0, 0.0),
    )
