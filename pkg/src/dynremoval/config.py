"""Pipeline configuration: dataclasses plus a YAML loader.

The YAML tree mirrors :class:`PipelineConfig`::

    ground_seg:   {rows, cols, vertical_fov, ground_rows, angle_threshold, sensor_mount_angle}
    downsample:   {cell}
    tracking_map: {voxel_size, max_points_per_voxel, min_point_spacing, search_adjacent}
    output_map:   {same keys as tracking_map}
    detector:     {fore_back_threshold, min_neighbors, nonground_ratio_threshold,
                   undetermined_max_far_sweeps, ratio_rule, ground_ratio_cutoff,
                   rollback_tracking}
    pipeline:     {bootstrap_min_points, min_range, poses_frame, record_verdicts}
    extrinsic:    {rotation: 3x3 | quaternion: [qx, qy, qz, qw], translation: [x, y, z]}

Unknown keys are rejected. Overrides use dotted paths (``detector.min_neighbors``)
and take precedence over file values, which take precedence over defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .core import Pose
from .detector import DetectorConfig
from .errors import ConfigError, PoseError
from .ground_seg import GroundSegConfig
from .voxel_map import VoxelMapConfig

_SECTIONS = {
    "ground_seg": GroundSegConfig,
    "tracking_map": VoxelMapConfig,
    "output_map": VoxelMapConfig,
    "detector": DetectorConfig,
}


@dataclass(frozen=True)
class PipelineConfig:
    ground_seg: GroundSegConfig = field(default_factory=GroundSegConfig)
    downsample_cell: float = 0.5
    tracking_map: VoxelMapConfig = field(default_factory=VoxelMapConfig)
    output_map: VoxelMapConfig = field(default_factory=VoxelMapConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    # LiDAR -> body; applied only when poses_frame == "body".
    extrinsic: Pose = field(default_factory=Pose.identity)
    poses_frame: str = "lidar"
    min_range: float = 0.5
    # Sweeps are inserted wholesale while the tracking map is smaller than this.
    bootstrap_min_points: int = 10_000
    record_verdicts: bool = True

    def __post_init__(self):
        if not self.downsample_cell > 0:
            raise ConfigError("downsample.cell must be positive")
        if self.poses_frame not in ("lidar", "body"):
            raise ConfigError(f"pipeline.poses_frame must be 'lidar' or 'body', got {self.poses_frame!r}")
        if self.min_range < 0:
            raise ConfigError("pipeline.min_range must be >= 0")
        if self.bootstrap_min_points < 0:
            raise ConfigError("pipeline.bootstrap_min_points must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for name in _SECTIONS:
            d = dataclasses.asdict(getattr(self, name))
            out[name] = {k: (v.value if hasattr(v, "value") else list(v) if isinstance(v, tuple) else v)
                         for k, v in d.items()}
        out["downsample"] = {"cell": self.downsample_cell}
        out["pipeline"] = {
            "bootstrap_min_points": self.bootstrap_min_points,
            "min_range": self.min_range,
            "poses_frame": self.poses_frame,
            "record_verdicts": self.record_verdicts,
        }
        out["extrinsic"] = {
            "rotation": self.extrinsic.rotation.tolist(),
            "translation": self.extrinsic.translation.tolist(),
        }
        return out


def _flatten(tree: dict, prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for k, v in tree.items():
        path = f"{prefix}{k}"
        if isinstance(v, dict) and k != "extrinsic" and prefix == "":
            flat.update(_flatten(v, path + "."))
        else:
            flat[path] = v
    return flat


def _known_keys() -> set[str]:
    keys = {f"{s}.{f.name}" for s, cls in _SECTIONS.items() for f in dataclasses.fields(cls)}
    keys |= {"downsample.cell", "extrinsic"}
    keys |= {f"pipeline.{k}" for k in ("bootstrap_min_points", "min_range", "poses_frame", "record_verdicts")}
    return keys


def _extrinsic(spec) -> Pose:
    if isinstance(spec, Pose):
        return spec
    if not isinstance(spec, dict):
        raise ConfigError("extrinsic must be a mapping")
    unknown = set(spec) - {"rotation", "quaternion", "translation"}
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted('extrinsic.' + k for k in unknown))}")
    t = spec.get("translation", [0.0, 0.0, 0.0])
    try:
        if "quaternion" in spec:
            return Pose.from_quaternion(spec["quaternion"], t)
        return Pose.from_rt(spec.get("rotation", [[1, 0, 0], [0, 1, 0], [0, 0, 1]]), t)
    except (PoseError, ValueError) as e:
        raise ConfigError(f"invalid extrinsic: {e}") from None


def build_config(tree: dict | None = None, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    """Create a config from a nested mapping and dotted-path overrides."""
    flat = _flatten(tree or {})
    flat.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(flat) - _known_keys())
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")

    def section(name: str, cls):
        kw = {k.split(".", 1)[1]: v for k, v in flat.items() if k.startswith(name + ".")}
        try:
            return cls(**kw)
        except TypeError as e:
            raise ConfigError(f"{name}: {e}") from None

    try:
        return PipelineConfig(
            ground_seg=section("ground_seg", GroundSegConfig),
            downsample_cell=float(flat.get("downsample.cell", 0.5)),
            tracking_map=section("tracking_map", VoxelMapConfig),
            output_map=section("output_map", VoxelMapConfig),
            detector=section("detector", DetectorConfig),
            extrinsic=_extrinsic(flat["extrinsic"]) if "extrinsic" in flat else Pose.identity(),
            poses_frame=str(flat.get("pipeline.poses_frame", "lidar")),
            min_range=float(flat.get("pipeline.min_range", 0.5)),
            bootstrap_min_points=int(flat.get("pipeline.bootstrap_min_points", 10_000)),
            record_verdicts=bool(flat.get("pipeline.record_verdicts", True)),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    tree: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        try:
            tree = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: {e}") from None
        if not isinstance(tree, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    return build_config(tree, overrides)


def dump_config(cfg: PipelineConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
