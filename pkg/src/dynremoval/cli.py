"""Command-line driver: ``dynremoval {run,eval,synth,timing}``.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .config import dump_config, load_config
from .core import PointClass, Sweep
from .errors import ConfigError, DynRemovalError, InputError
from .evaluation import score, timing_summary, timing_table
from .pipeline import Pipeline
from .synth import driving_scene, load_scene, raycast_sweep

log = logging.getLogger("dynremoval")

EXIT_USAGE, EXIT_DATA, EXIT_CONFIG = 2, 3, 4

# flag dest -> dotted config key
_OVERRIDES = {
    "fore_back_threshold": "detector.fore_back_threshold",
    "min_neighbors": "detector.min_neighbors",
    "nonground_ratio": "detector.nonground_ratio_threshold",
    "ground_ratio_cutoff": "detector.ground_ratio_cutoff",
    "max_far_sweeps": "detector.undetermined_max_far_sweeps",
    "ratio_rule": "detector.ratio_rule",
    "downsample_cell": "downsample.cell",
    "bootstrap_min_points": "pipeline.bootstrap_min_points",
    "poses_frame": "pipeline.poses_frame",
    "angle_threshold": "ground_seg.angle_threshold",
}


def _overrides(args) -> dict:
    out = {key: getattr(args, dest) for dest, key in _OVERRIDES.items() if getattr(args, dest) is not None}
    if args.voxel_size is not None:
        out["tracking_map.voxel_size"] = args.voxel_size
        out["output_map.voxel_size"] = args.voxel_size
    return out


def cmd_run(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    scans = dataio.list_files(args.scans, ".bin")
    if not Path(args.poses).is_file():
        raise dataio.FormatError("pose file not found", args.poses)
    extrinsic = cfg.extrinsic if cfg.poses_frame == "body" else None
    poses = dataio.read_poses(args.poses, args.pose_format, extrinsic)
    if args.calib:
        poses = dataio.camera_to_lidar_poses(poses, dataio.read_kitti_calib(args.calib))
    if args.max_sweeps is not None:
        scans = scans[: args.max_sweeps]
    if len(poses) < len(scans):
        raise dataio.FormatError(f"{len(poses)} poses for {len(scans)} scans", args.poses)

    pipe = Pipeline(cfg)
    report_file = open(args.report, "w") if args.report else None
    try:
        for i, path in enumerate(scans):
            raw = dataio.read_kitti_bin(path)
            rep = pipe.process(Sweep(i, raw[:, :3], poses[i]))
            if report_file:
                report_file.write(rep.to_json(not args.omit_timings) + "\n")
            log.info("sweep %d: %s", i, rep.to_dict(False)["counts"])
    finally:
        if report_file:
            report_file.close()

    if args.out_map:
        dataio.write_ply(pipe.output_map, args.out_map, args.color_by)
    if args.out_tracking:
        dataio.write_ply(pipe.tracking_map, args.out_tracking, args.color_by)
    if args.verdicts:
        dataio.write_verdicts(args.verdicts, pipe.verdicts())
    if pipe.reports:
        print(timing_table(timing_summary(pipe.reports)))
    return 0


def evaluate_dump(verdicts, label_dir, dynamic_classes=None):
    """Join a verdict dump with per-sweep ``.label`` files and score it."""
    table = dataio.read_verdicts(verdicts) if not hasattr(verdicts, "sweep") else verdicts
    labels = dataio.list_files(label_dir, ".label")
    classes = dataio.load_dynamic_classes(dynamic_classes)
    gt = np.zeros(len(table), bool)
    for s in np.unique(table.sweep):
        if s >= len(labels):
            raise InputError(f"verdicts reference sweep {s} but only {len(labels)} label files exist")
        rows = np.flatnonzero(table.sweep == s)
        lab = dataio.read_semantic_labels(labels[s], dynamic_classes=classes)
        idx = table.point[rows]
        if len(idx) and idx.max() >= len(lab):
            raise InputError(f"{labels[s]}: point index {idx.max()} out of range")
        gt[rows] = lab.dynamic[idx]
    cls = table.point_class.copy()
    # still-pending undetermined points are scored as static
    cls[cls == PointClass.UNDETERMINED] = PointClass.STATIC
    return score(cls, gt)


def cmd_eval(args) -> int:
    result = evaluate_dump(args.verdicts, args.labels, args.dynamic_classes)
    print(result.table())
    if args.json:
        Path(args.json).write_text(result.to_json() + "\n")
    return 0


def cmd_synth(args) -> int:
    scene = load_scene(args.scene) if args.scene else driving_scene()
    out = Path(args.out)
    (out / "velodyne").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    poses = []
    for i in range(args.sweeps):
        s = raycast_sweep(scene, i)
        dataio.write_kitti_bin(out / "velodyne" / f"{i:06d}.bin", s.sweep.points)
        dataio.write_semantic_labels(out / "labels" / f"{i:06d}.label", s.semantic)
        poses.append(s.sweep.pose_world_lidar)
    dataio.write_poses(out / "poses.txt", poses)
    cfg = load_config(None, {f"ground_seg.{k}": v for k, v in scene.sensor.ground_seg_params().items()})
    dump_config(cfg, out / "config.yaml")
    print(f"wrote {args.sweeps} sweeps to {out}")
    return 0


def cmd_timing(args) -> int:
    summary = timing_summary(dataio.read_reports(args.report))
    print(timing_table(summary))
    if args.json:
        Path(args.json).write_text(json.dumps(summary, sort_keys=True) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynremoval", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="remove dynamic points from a scan sequence")
    run.add_argument("--scans", required=True, help="directory of .bin scans (sorted by name)")
    run.add_argument("--poses", required=True)
    run.add_argument("--pose-format", default="kitti_odometry", choices=dataio.POSE_FORMATS)
    run.add_argument("--calib", help="KITTI calib.txt; converts camera-frame poses to LiDAR frame")
    run.add_argument("--config")
    run.add_argument("--out-map", help="output-map PLY")
    run.add_argument("--out-tracking", help="tracking-map PLY")
    run.add_argument("--report", help="JSON-lines sweep reports")
    run.add_argument("--verdicts", help="per-point verdict dump (.npz)")
    run.add_argument("--color-by", default="label", choices=("label", "class"))
    run.add_argument("--omit-timings", action="store_true", help="leave timings out of reports")
    run.add_argument("--max-sweeps", type=int)
    run.add_argument("--fore-back-threshold", type=float)
    run.add_argument("--min-neighbors", type=int)
    run.add_argument("--nonground-ratio", type=float)
    run.add_argument("--ground-ratio-cutoff", type=float)
    run.add_argument("--max-far-sweeps", type=int)
    run.add_argument("--ratio-rule", choices=("literal", "reconciled"))
    run.add_argument("--voxel-size", type=float)
    run.add_argument("--downsample-cell", type=float)
    run.add_argument("--bootstrap-min-points", type=int)
    run.add_argument("--poses-frame", choices=("lidar", "body"))
    run.add_argument("--angle-threshold", type=float)
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="score a verdict dump against .label files")
    ev.add_argument("--verdicts", required=True)
    ev.add_argument("--labels", required=True)
    ev.add_argument("--dynamic-classes", help="YAML class mapping (default: moving-* classes)")
    ev.add_argument("--json")
    ev.set_defaults(func=cmd_eval)

    sy = sub.add_parser("synth", help="raycast a synthetic scene into KITTI-format files")
    sy.add_argument("--scene", help="scene YAML (default: built-in driving scene)")
    sy.add_argument("--sweeps", type=int, required=True)
    sy.add_argument("--out", required=True)
    sy.set_defaults(func=cmd_synth)

    tm = sub.add_parser("timing", help="summarize per-stage timings of a report file")
    tm.add_argument("--report", required=True)
    tm.add_argument("--json")
    tm.set_defaults(func=cmd_timing)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DynRemovalError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
