"""Online dynamic-point removal for spinning-LiDAR sweeps by label consistency."""

from .config import PipelineConfig, build_config, load_config
from .core import GroundLabel, LabeledPoint, Point3, PointClass, Pose, Sweep, compose, inverse, transform_point
from .detector import DetectorConfig, RatioRule, Reason, Verdict
from .errors import ConfigError, DynRemovalError, FormatError, InputError, OrderError, PoseError
from .evaluation import PrRrResult, score, timing_summary
from .pipeline import Pipeline, SweepReport, process_sweep
from .voxel_map import VoxelKey, VoxelMap, VoxelMapConfig, key_of

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DetectorConfig", "DynRemovalError", "FormatError", "GroundLabel", "InputError",
    "LabeledPoint", "OrderError", "Pipeline", "PipelineConfig", "Point3", "PointClass", "Pose",
    "PoseError", "PrRrResult", "RatioRule", "Reason", "Sweep", "SweepReport", "Verdict", "VoxelKey",
    "VoxelMap", "VoxelMapConfig", "build_config", "compose", "inverse", "key_of", "load_config",
    "process_sweep", "score", "timing_summary", "transform_point",
]
