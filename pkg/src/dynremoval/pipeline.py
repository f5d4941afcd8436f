"""Per-sweep orchestration of ground labeling, detection and map updates."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .core import GroundLabel, LabeledPoint, Point3, PointClass, Pose, Sweep, UNSET
from .detector import (
    Reason,
    UndeterminedContainer,
    classify_counts,
    is_back,
    resolve_undetermined,
)
from .downsample import voxel_indices
from .errors import OrderError, PoseError
from .ground_seg import fit_ground, project
from .voxel_map import VoxelMap

log = logging.getLogger(__name__)

TIMING_KEYS = ("ground_fitting", "cloud_processing", "detection", "map_update", "total")


@dataclass
class SweepReport:
    sweep: int
    ground: int = 0
    static: int = 0
    dynamic: int = 0
    undetermined_born: int = 0
    undetermined_resolved: int = 0
    resolved_static: int = 0
    resolved_dynamic: int = 0
    points_raw: int = 0
    points_processed: int = 0
    bootstrap: bool = False
    tracking_map_points: int = 0
    output_map_points: int = 0
    timings_ms: dict[str, float] = field(default_factory=lambda: dict.fromkeys(TIMING_KEYS, 0.0))

    def counts_consistent(self) -> bool:
        return self.ground + self.static + self.dynamic + self.undetermined_born == self.points_processed

    def to_dict(self, include_timings: bool = True) -> dict:
        d = {
            "sweep": self.sweep,
            "counts": {
                "ground": self.ground,
                "static": self.static,
                "dynamic": self.dynamic,
                "undetermined_born": self.undetermined_born,
                "undetermined_resolved": self.undetermined_resolved,
                "resolved_static": self.resolved_static,
                "resolved_dynamic": self.resolved_dynamic,
            },
            "points_raw": self.points_raw,
            "points_processed": self.points_processed,
            "bootstrap": self.bootstrap,
            "tracking_map_points": self.tracking_map_points,
            "output_map_points": self.output_map_points,
        }
        if include_timings:
            d["timings_ms"] = {k: round(v, 4) for k, v in self.timings_ms.items()}
        return d

    def to_json(self, include_timings: bool = True) -> str:
        return json.dumps(self.to_dict(include_timings), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> SweepReport:
        c = d.get("counts", {})
        return cls(
            sweep=int(d["sweep"]),
            points_raw=int(d.get("points_raw", 0)),
            points_processed=int(d.get("points_processed", 0)),
            bootstrap=bool(d.get("bootstrap", False)),
            tracking_map_points=int(d.get("tracking_map_points", 0)),
            output_map_points=int(d.get("output_map_points", 0)),
            timings_ms={k: float(v) for k, v in d.get("timings_ms", {}).items()},
            **{k: int(v) for k, v in c.items()},
        )


@dataclass
class VerdictTable:
    """Final per-point verdicts, one row per processed (post-downsample) point."""

    sweep: np.ndarray
    point: np.ndarray
    point_class: np.ndarray
    reason: np.ndarray

    def __len__(self) -> int:
        return len(self.sweep)


class _VerdictLog:
    def __init__(self):
        self._sweep: list[np.ndarray] = []
        self._point: list[np.ndarray] = []
        self._cls: list[np.ndarray] = []
        self._reason: list[np.ndarray] = []
        self._upd_id: list[np.ndarray] = []
        self._upd_cls: list[np.ndarray] = []
        self._upd_reason: list[np.ndarray] = []
        self.n = 0

    def append(self, sweep: int, point: np.ndarray, cls: np.ndarray, reason: np.ndarray) -> np.ndarray:
        ids = np.arange(self.n, self.n + len(point), dtype=np.int64)
        self._sweep.append(np.full(len(point), sweep, np.int32))
        self._point.append(np.asarray(point, np.int32))
        self._cls.append(np.asarray(cls, np.int8))
        self._reason.append(np.asarray(reason, np.int8))
        self.n += len(point)
        return ids

    def update(self, ids, cls, reason):
        keep = np.asarray(ids) >= 0
        self._upd_id.append(np.asarray(ids)[keep])
        self._upd_cls.append(np.asarray(cls, np.int8)[keep])
        self._upd_reason.append(np.asarray(reason, np.int8)[keep])

    def table(self) -> VerdictTable:
        def cat(parts, dtype):
            return np.concatenate(parts) if parts else np.zeros(0, dtype)

        cls = cat(self._cls, np.int8).copy()
        reason = cat(self._reason, np.int8).copy()
        if self._upd_id:
            ids = np.concatenate(self._upd_id)
            cls[ids] = np.concatenate(self._upd_cls)
            reason[ids] = np.concatenate(self._upd_reason)
        return VerdictTable(cat(self._sweep, np.int32), cat(self._point, np.int32), cls, reason)


@dataclass
class SweepResult:
    """Per-point arrays of the most recently processed sweep."""

    points_sensor: np.ndarray
    points_world: np.ndarray
    ground: np.ndarray
    point_class: np.ndarray
    reason: np.ndarray
    ring: np.ndarray
    source_index: np.ndarray

    def labeled_points(self) -> list[LabeledPoint]:
        out = []
        for ps, pw, g, c, r in zip(self.points_sensor, self.points_world, self.ground, self.point_class, self.ring):
            out.append(
                LabeledPoint(
                    Point3(*map(float, ps)),
                    Point3(*map(float, pw)),
                    GroundLabel(int(g)),
                    None if c == UNSET else PointClass(int(c)),
                    int(r),
                    float(np.linalg.norm(ps)),
                )
            )
        return out


class PipelineState:
    def __init__(self, cfg: PipelineConfig):
        self.tracking_map = VoxelMap(cfg.tracking_map)
        self.output_map = VoxelMap(cfg.output_map)
        self.container = UndeterminedContainer()
        self.last_index = -1
        self.verdicts = _VerdictLog()
        self.last: SweepResult | None = None
        self.last_resolution = None


def process_sweep(sweep: Sweep, cfg: PipelineConfig, state: PipelineState) -> SweepReport:
    """Run one sweep through label -> downsample -> detect -> map update -> resolve."""
    if sweep.index <= state.last_index:
        raise OrderError(f"sweep {sweep.index} arrived after sweep {state.last_index}")
    if not isinstance(sweep.pose_world_lidar, Pose):
        raise PoseError(f"sweep {sweep.index} has no valid pose")
    det = cfg.detector
    report = SweepReport(sweep=sweep.index, points_raw=len(sweep))
    t = report.timings_ms
    t_start = time.perf_counter()

    valid = sweep.validated(cfg.min_range)
    t0 = time.perf_counter()

    gcfg = cfg.ground_seg
    if len(valid):
        img = project(valid, gcfg.rows, gcfg.cols, gcfg.vertical_fov)
        ground_all = fit_ground(
            img, valid.points, gcfg.resolved_ground_rows(), gcfg.angle_threshold, gcfg.sensor_mount_angle
        )
        rows_all = img.point_row
    else:
        log.warning("sweep %d has no valid points", sweep.index)
        ground_all = np.zeros(0, np.uint8)
        rows_all = np.zeros(0, np.int64)
    t1 = time.perf_counter()

    keep = voxel_indices(valid.points, cfg.downsample_cell)
    pts = valid.points[keep]
    ground = ground_all[keep]
    rings = rows_all[keep]
    src = valid.source_index[keep]
    pose = sweep.pose_world_lidar
    world = pose.apply(pts)
    platform = pose.translation
    n = len(pts)
    t2 = time.perf_counter()

    is_ground = ground == GroundLabel.GROUND
    cls = np.full(n, PointClass.STATIC, np.int8)
    reason = np.full(n, Reason.GROUND, np.int8)
    report.bootstrap = len(state.tracking_map) < cfg.bootstrap_min_points
    if report.bootstrap:
        reason[~is_ground] = Reason.BOOTSTRAP
    else:
        ng = ~is_ground
        count, nonground = state.tracking_map.neighbor_counts(world[ng])
        c, r = classify_counts(count, nonground, is_back(world[ng], platform, det), det)
        cls[ng] = c
        reason[ng] = r
    t3 = time.perf_counter()

    static = cls == PointClass.STATIC
    undet = cls == PointClass.UNDETERMINED
    to_tracking = static | undet
    inserted = state.tracking_map.insert_many(world[to_tracking], ground[to_tracking], cls[to_tracking])
    # Only static points the tracking map kept go on to the output map, so the
    # output map stays a subset of tracking map plus resolved entries.
    accepted = np.zeros(n, bool)
    accepted[to_tracking] = inserted
    out = static & accepted
    state.output_map.insert_many(world[out], ground[out], cls[out])
    t4 = time.perf_counter()

    ids = state.verdicts.append(sweep.index, src, cls, reason) if cfg.record_verdicts else None
    if undet.any():
        in_tracking = inserted[undet[to_tracking]]
        state.container.add(
            world[undet], sweep.index, None if ids is None else ids[undet], in_tracking
        )
    res = resolve_undetermined(state.container, platform, state.tracking_map, det, sweep.index)
    t5 = time.perf_counter()

    res_static = res.point_class == PointClass.STATIC
    if res_static.any():
        state.output_map.insert_many(res.position[res_static], GroundLabel.NON_GROUND, PointClass.STATIC)
    if det.rollback_tracking:
        for p in res.position[~res_static & res.in_tracking]:
            state.tracking_map.remove_exact(p)
    if cfg.record_verdicts and len(res):
        state.verdicts.update(res.point_id, res.point_class, res.reason)
    t6 = time.perf_counter()

    report.points_processed = n
    report.ground = int(is_ground.sum())
    report.static = int((static & ~is_ground).sum())
    report.dynamic = int((cls == PointClass.DYNAMIC).sum())
    report.undetermined_born = int(undet.sum())
    report.undetermined_resolved = len(res)
    report.resolved_static = int(res_static.sum())
    report.resolved_dynamic = len(res) - report.resolved_static
    report.tracking_map_points = len(state.tracking_map)
    report.output_map_points = len(state.output_map)
    ms = 1000.0
    t["ground_fitting"] = (t1 - t0) * ms
    t["cloud_processing"] = ((t0 - t_start) + (t2 - t1)) * ms
    t["detection"] = ((t3 - t2) + (t5 - t4)) * ms
    t["map_update"] = ((t4 - t3) + (t6 - t5)) * ms
    t["total"] = (t6 - t_start) * ms

    state.last = SweepResult(pts, world, ground, cls, reason, rings, src)
    state.last_resolution = res
    state.last_index = sweep.index
    return report


class Pipeline:
    """Convenience wrapper owning a config and its mutable state."""

    def __init__(self, cfg: PipelineConfig | None = None):
        self.cfg = cfg or PipelineConfig()
        self.state = PipelineState(self.cfg)
        self.reports: list[SweepReport] = []

    @property
    def tracking_map(self) -> VoxelMap:
        return self.state.tracking_map

    @property
    def output_map(self) -> VoxelMap:
        return self.state.output_map

    def process(self, sweep: Sweep) -> SweepReport:
        report = process_sweep(sweep, self.cfg, self.state)
        self.reports.append(report)
        return report

    def run(self, sweeps) -> list[SweepReport]:
        return [self.process(s) for s in sweeps]

    def verdicts(self) -> VerdictTable:
        return self.state.verdicts.table()
