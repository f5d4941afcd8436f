"""Readers and writers for KITTI-style sweeps, labels, poses, PLY maps and dumps.

Byte layouts:

* ``.bin``   -- N x 4 little-endian float32 (x, y, z, intensity)
* ``.label`` -- N little-endian uint32; lower 16 bits are the semantic class
* poses      -- KITTI odometry (12 floats per line, row-major 3x4) or TUM
  (``timestamp tx ty tz qx qy qz qw``); lines starting with ``#`` are skipped
* ``.ply``   -- binary little-endian, float32 x/y/z + uint8 r/g/b
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .core import Pose
from .errors import FormatError, PoseError
from .pipeline import SweepReport, VerdictTable
from .voxel_map import VoxelMap

log = logging.getLogger(__name__)

POSE_FORMATS = ("kitti_odometry", "tum")


def read_kitti_bin(path) -> np.ndarray:
    """Return an ``(N, 4)`` float32 array of x, y, z, intensity."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) % 16:
        raise FormatError(f"size {len(data)} is not a multiple of 16 bytes", path)
    if not data:
        warnings.warn(f"{path}: empty scan", stacklevel=2)
    return np.frombuffer(data, dtype="<f4").reshape(-1, 4).copy()


def write_kitti_bin(path, points, intensity=None) -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    out = np.zeros((len(pts), 4), dtype="<f4")
    out[:, :3] = pts
    if intensity is not None:
        out[:, 3] = intensity
    Path(path).write_bytes(out.tobytes())


def load_dynamic_classes(path=None) -> dict[int, str]:
    """Semantic class id -> name for classes scored as ground-truth dynamic."""
    if path is None:
        text = resources.files("dynremoval").joinpath("data/semantic_kitti_dynamic.yaml").read_text()
    else:
        text = Path(path).read_text()
    tree = yaml.safe_load(text) or {}
    classes = tree.get("dynamic_classes", {})
    if isinstance(classes, list):
        return {int(c): str(c) for c in classes}
    return {int(k): str(v) for k, v in classes.items()}


@dataclass
class SemanticLabels:
    raw: np.ndarray
    semantic: np.ndarray
    dynamic: np.ndarray

    def __len__(self) -> int:
        return len(self.raw)


def read_semantic_labels(path, n_points: int | None = None, dynamic_classes=None) -> SemanticLabels:
    path = Path(path)
    data = path.read_bytes()
    if len(data) % 4:
        raise FormatError(f"size {len(data)} is not a multiple of 4 bytes", path)
    raw = np.frombuffer(data, dtype="<u4").copy()
    if n_points is not None and len(raw) != n_points:
        raise FormatError(f"{len(raw)} labels for {n_points} points", path)
    if dynamic_classes is None:
        dynamic_classes = load_dynamic_classes()
    semantic = (raw & 0xFFFF).astype(np.int64)
    dynamic = np.isin(semantic, np.fromiter(dynamic_classes, dtype=np.int64))
    return SemanticLabels(raw, semantic, dynamic)


def write_semantic_labels(path, semantic, instance=None) -> None:
    sem = np.asarray(semantic, dtype=np.uint32)
    if instance is not None:
        sem = sem | (np.asarray(instance, dtype=np.uint32) << 16)
    Path(path).write_bytes(sem.astype("<u4").tobytes())


def read_poses(path, fmt: str = "kitti_odometry", extrinsic: Pose | None = None) -> list[Pose]:
    """Parse one pose per non-comment line.

    With ``extrinsic`` (LiDAR -> body) the body-frame poses are composed into
    LiDAR-frame poses: ``world_T_lidar = world_T_body * body_T_lidar``.
    """
    if fmt not in POSE_FORMATS:
        raise FormatError(f"unknown pose format {fmt!r}; expected one of {POSE_FORMATS}", path)
    path = Path(path)
    poses = []
    with path.open() as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                vals = [float(v) for v in line.replace(",", " ").split()]
            except ValueError:
                raise FormatError("non-numeric pose value", path, lineno) from None
            try:
                if fmt == "kitti_odometry":
                    if len(vals) != 12:
                        raise FormatError(f"expected 12 values, got {len(vals)}", path, lineno)
                    pose = Pose.from_matrix(np.array(vals).reshape(3, 4))
                else:
                    if len(vals) != 8:
                        raise FormatError(f"expected 8 values, got {len(vals)}", path, lineno)
                    pose = Pose.from_quaternion(vals[4:8], vals[1:4])
            except PoseError as e:
                raise FormatError(str(e), path, lineno) from None
            # files carry ~9 significant digits; snap back onto SO(3)
            pose = pose.orthonormalized()
            if extrinsic is not None:
                pose = pose @ extrinsic
            poses.append(pose)
    return poses


def read_kitti_calib(path) -> Pose:
    """Return the LiDAR -> camera transform (``Tr:`` line) of a KITTI ``calib.txt``."""
    path = Path(path)
    with path.open() as f:
        for lineno, line in enumerate(f, 1):
            if line.startswith("Tr:"):
                try:
                    vals = [float(v) for v in line.split()[1:]]
                    return Pose.from_matrix(np.array(vals).reshape(3, 4)).orthonormalized()
                except (ValueError, PoseError) as e:
                    raise FormatError(str(e), path, lineno) from None
    raise FormatError("no 'Tr:' line", path)


def camera_to_lidar_poses(poses, tr: Pose) -> list[Pose]:
    """Convert KITTI camera-frame odometry poses to LiDAR-frame poses.

    ``world_T_lidar = Tr^-1 * cam0_T_cam * Tr`` so the world frame becomes the
    first LiDAR frame.
    """
    tr_inv = tr.inverse()
    return [tr_inv @ p @ tr for p in poses]


def write_poses(path, poses, fmt: str = "kitti_odometry", header: bool = True) -> None:
    lines = []
    if header:
        lines.append(
            "# kitti_odometry: row-major 3x4 world_T_lidar per sweep"
            if fmt == "kitti_odometry"
            else "# timestamp tx ty tz qx qy qz qw"
        )
    for i, p in enumerate(poses):
        if fmt == "kitti_odometry":
            lines.append(" ".join(repr(float(v)) for v in p.matrix()[:3].ravel()))
        else:
            lines.append(" ".join(repr(float(v)) for v in [float(i), *p.translation, *_quat(p.rotation)]))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def _quat(r: np.ndarray) -> list[float]:
    """Rotation matrix -> ``[qx, qy, qz, qw]`` (Shepperd's method)."""
    tr = np.trace(r)
    if tr > max(r[0, 0], r[1, 1], r[2, 2]):
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [(r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s, s / 4]
    else:
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = 2.0 * np.sqrt(1.0 + r[i, i] - r[j, j] - r[k, k])
        q = [0.0, 0.0, 0.0, (r[k, j] - r[j, k]) / s]
        q[i] = s / 4
        q[j] = (r[j, i] + r[i, j]) / s
        q[k] = (r[k, i] + r[i, k]) / s
    return [float(v) for v in q]


# ground vs non-ground; static vs undetermined
_LABEL_COLORS = np.array([[200, 200, 200], [255, 140, 0]], dtype=np.uint8)
_CLASS_COLORS = np.array([[255, 255, 255], [0, 200, 0], [220, 20, 60]], dtype=np.uint8)


def write_ply(vmap, path, color_by: str = "label") -> None:
    """Write a map (or a ``(points, labels, classes)`` triple) as binary PLY."""
    if color_by not in ("label", "class"):
        raise ValueError("color_by must be 'label' or 'class'")
    pts, lbl, cls = vmap.export() if isinstance(vmap, VoxelMap) else vmap
    colors = _LABEL_COLORS[np.asarray(lbl, np.int64)] if color_by == "label" else _CLASS_COLORS[np.asarray(cls, np.int64)]
    vertex = np.zeros(
        len(pts),
        dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("red", "u1"), ("green", "u1"), ("blue", "u1")],
    )
    if len(pts):
        vertex["x"], vertex["y"], vertex["z"] = np.asarray(pts).T
        vertex["red"], vertex["green"], vertex["blue"] = colors.T
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {len(pts)}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    Path(path).write_bytes(header.encode("ascii") + vertex.tobytes())


def read_ply(path) -> tuple[np.ndarray, np.ndarray]:
    """Read back a PLY written by :func:`write_ply`; returns ``(xyz, rgb)``."""
    data = Path(path).read_bytes()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    header = data[:end].decode("ascii").splitlines()
    n = next(int(line.split()[2]) for line in header if line.startswith("element vertex"))
    dt = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("red", "u1"), ("green", "u1"), ("blue", "u1")])
    v = np.frombuffer(data[end:], dtype=dt, count=n)
    return np.stack([v["x"], v["y"], v["z"]], axis=1), np.stack([v["red"], v["green"], v["blue"]], axis=1)


def write_verdicts(path, table: VerdictTable) -> None:
    with open(path, "wb") as f:
        np.savez_compressed(
            f, sweep=table.sweep, point=table.point, point_class=table.point_class, reason=table.reason
        )


def read_verdicts(path) -> VerdictTable:
    try:
        with np.load(path) as z:
            return VerdictTable(z["sweep"], z["point"], z["point_class"], z["reason"])
    except (OSError, KeyError, ValueError) as e:
        raise FormatError(f"not a verdict dump: {e}", path) from None


def write_reports(path, reports, include_timings: bool = True) -> None:
    with open(path, "w") as f:
        for r in reports:
            f.write(r.to_json(include_timings) + "\n")


def read_reports(path) -> list[SweepReport]:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if line.strip():
                try:
                    out.append(SweepReport.from_dict(json.loads(line)))
                except (ValueError, KeyError, TypeError) as e:
                    raise FormatError(str(e), path, lineno) from None
    return out


def list_files(directory, suffix: str) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FormatError("not a directory", d)
    return sorted(p for p in d.iterdir() if p.suffix == suffix)
