"""Voxel-grid downsampling that keeps the point nearest each cell center."""

from __future__ import annotations

import numpy as np

from .voxel_map import pack_keys


def voxel_indices(points: np.ndarray, cell: float) -> np.ndarray:
    """Return one representative row index per occupied cell, ordered by cell key.

    Within a cell the survivor is the point closest to the cell center; exact
    distance ties fall to the lexicographically smaller coordinate so the
    result does not depend on input order.
    """
    if cell <= 0:
        raise ValueError("cell must be positive")
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) == 0:
        return np.zeros(0, dtype=np.int64)
    fkeys = np.floor(pts / cell)
    d2 = ((pts - (fkeys + 0.5) * cell) ** 2).sum(axis=1)
    keys = fkeys.astype(np.int64)
    try:
        packed = pack_keys(keys)
    except ValueError:
        # coordinates too large to pack: fall back to a full lexicographic sort
        order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0], d2, keys[:, 2], keys[:, 1], keys[:, 0]))
        k = keys[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = (k[1:] != k[:-1]).any(axis=1)
        return order[first]

    order = np.argsort(packed, kind="stable")
    sk = packed[order]
    starts = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1]])
    sd = d2[order]
    best = np.minimum.reduceat(sd, starts)
    counts = np.diff(np.r_[starts, len(sk)])
    cand = sd == np.repeat(best, counts)
    n_cand = np.add.reduceat(cand.astype(np.int64), starts)
    # first candidate position within each group
    pos = np.flatnonzero(cand)
    grp_of_pos = np.repeat(np.arange(len(starts)), n_cand)
    first_pos = pos[np.r_[True, grp_of_pos[1:] != grp_of_pos[:-1]]]
    out = order[first_pos]
    for g in np.flatnonzero(n_cand > 1):
        rows = order[starts[g]:starts[g] + counts[g]][cand[starts[g]:starts[g] + counts[g]]]
        out[g] = rows[np.lexsort((pts[rows, 2], pts[rows, 1], pts[rows, 0]))[0]]
    return out


def voxel_downsample(points, cell: float = 0.5):
    """Downsample an ``(N, 3)`` array or a sequence of ``LabeledPoint``.

    Cells are keyed on the sensor-frame position. Arrays come back as arrays,
    ``LabeledPoint`` sequences as lists.
    """
    if isinstance(points, np.ndarray):
        return points[voxel_indices(points, cell)]
    pts = list(points)
    if not pts:
        return []
    xyz = np.array([p.position_sensor for p in pts], dtype=np.float64)
    return [pts[i] for i in voxel_indices(xyz, cell)]
