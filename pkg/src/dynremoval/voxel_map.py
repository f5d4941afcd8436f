"""Hash voxel map with bounded per-voxel point lists.

Storage is an open-addressing hash table (linear probing) from packed voxel
keys to dense cell slots; each cell holds at most ``max_points_per_voxel``
points kept at least ``min_point_spacing`` apart. Neighbor queries only look
at the voxel containing the query unless ``search_adjacent`` is set.

Voxel indices are packed into one int64 with 21 bits per axis, so each index
must satisfy ``|i| < 2**20`` (about +-1000 km at 1 m voxels).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numba
import numpy as np

from .core import GroundLabel, Point3, PointClass
from .errors import ConfigError

_BITS = 21
_OFFSET = 1 << (_BITS - 1)
_FIELD = (1 << _BITS) - 1
_EMPTY = -1
_TOMB = -2
_MIX = np.int64(-7046029254386353131)  # 0x9E3779B97F4A7C15

_NEIGHBOR_OFFSETS = np.array(
    [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)],
    dtype=np.int64,
)


class VoxelKey(NamedTuple):
    ix: int
    iy: int
    iz: int


@dataclass(frozen=True)
class VoxelMapConfig:
    voxel_size: float = 1.0
    max_points_per_voxel: int = 20
    min_point_spacing: float = 0.1
    search_adjacent: bool = False

    def __post_init__(self):
        if not self.voxel_size > 0:
            raise ConfigError("voxel_size must be positive")
        if self.max_points_per_voxel < 1:
            raise ConfigError("max_points_per_voxel must be >= 1")
        if self.min_point_spacing < 0:
            raise ConfigError("min_point_spacing must be >= 0")


def key_of(p, voxel_size: float) -> VoxelKey:
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    k = np.floor(np.asarray(p, dtype=np.float64) / voxel_size).astype(np.int64)
    return VoxelKey(int(k[0]), int(k[1]), int(k[2]))


def keys_of(points: np.ndarray, voxel_size: float) -> np.ndarray:
    """Vectorized :func:`key_of`; returns an ``(N, 3)`` int64 array."""
    return np.floor(np.asarray(points, dtype=np.float64) / voxel_size).astype(np.int64)


def pack_keys(keys: np.ndarray) -> np.ndarray:
    k = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
    if k.size and (np.abs(k).max() >= _OFFSET):
        raise ValueError("voxel index outside the packable range")
    k = k + _OFFSET
    return (k[:, 0] << (2 * _BITS)) | (k[:, 1] << _BITS) | k[:, 2]


def unpack_keys(packed: np.ndarray) -> np.ndarray:
    p = np.asarray(packed, dtype=np.int64)
    out = np.empty((len(p), 3), dtype=np.int64)
    out[:, 0] = (p >> (2 * _BITS)) & _FIELD
    out[:, 1] = (p >> _BITS) & _FIELD
    out[:, 2] = p & _FIELD
    return out - _OFFSET


@numba.njit(cache=True, inline="always")
def _hash(key):
    h = key * _MIX
    return h ^ (h >> 29)


@numba.njit(cache=True)
def _find(slot_keys, key):
    mask = slot_keys.shape[0] - 1
    j = _hash(key) & mask
    while True:
        k = slot_keys[j]
        if k == key or k == _EMPTY:
            return j
        j = (j + 1) & mask


@numba.njit(cache=True)
def _lookup_many(slot_keys, slot_cells, keys):
    out = np.empty(keys.shape[0], np.int64)
    for i in range(keys.shape[0]):
        j = _find(slot_keys, keys[i])
        out[i] = slot_cells[j] if slot_keys[j] == keys[i] else -1
    return out


@numba.njit(cache=True)
def _lookup_one(slot_keys, slot_cells, key):
    j = _find(slot_keys, key)
    return slot_cells[j] if slot_keys[j] == key else -1


@numba.njit(cache=True)
def _rehash(cell_keys, n_cells, n_slots):
    slot_keys = np.full(n_slots, _EMPTY, np.int64)
    slot_cells = np.full(n_slots, -1, np.int64)
    for c in range(n_cells):
        j = _find(slot_keys, cell_keys[c])
        slot_keys[j] = cell_keys[c]
        slot_cells[j] = c
    return slot_keys, slot_cells


@numba.njit(cache=True)
def _insert_batch(
    slot_keys, slot_cells, cell_keys, cell_pts, cell_lbl, cell_cls, cell_cnt, cell_ng,
    meta, keys, pts, lbls, clss, out, start, spacing2,
):
    n_slots = slot_keys.shape[0]
    n_cap = cell_keys.shape[0]
    cap = cell_pts.shape[1]
    for i in range(start, keys.shape[0]):
        key = keys[i]
        j = _find(slot_keys, key)
        if slot_keys[j] == key:
            c = slot_cells[j]
        else:
            if meta[0] >= n_cap or 2 * (meta[1] + 1) > n_slots:
                return i
            c = meta[0]
            meta[0] += 1
            meta[1] += 1
            slot_keys[j] = key
            slot_cells[j] = c
            cell_keys[c] = key
            cell_cnt[c] = 0
            cell_ng[c] = 0
        n = cell_cnt[c]
        if n >= cap:
            out[i] = False
            continue
        ok = True
        for m in range(n):
            dx = cell_pts[c, m, 0] - pts[i, 0]
            dy = cell_pts[c, m, 1] - pts[i, 1]
            dz = cell_pts[c, m, 2] - pts[i, 2]
            if dx * dx + dy * dy + dz * dz < spacing2:
                ok = False
                break
        if not ok:
            out[i] = False
            continue
        cell_pts[c, n, 0] = pts[i, 0]
        cell_pts[c, n, 1] = pts[i, 1]
        cell_pts[c, n, 2] = pts[i, 2]
        cell_lbl[c, n] = lbls[i]
        cell_cls[c, n] = clss[i]
        cell_cnt[c] = n + 1
        if lbls[i] == 0:
            cell_ng[c] += 1
        meta[2] += 1
        out[i] = True
    return keys.shape[0]


class VoxelMap:
    """Global map keyed by voxel; one instance each for tracking and output."""

    def __init__(self, cfg: VoxelMapConfig | None = None, initial_cells: int = 1024):
        self.cfg = cfg or VoxelMapConfig()
        cap = max(16, int(initial_cells))
        p = self.cfg.max_points_per_voxel
        self._cell_keys = np.zeros(cap, np.int64)
        self._cell_pts = np.zeros((cap, p, 3), np.float64)
        self._cell_lbl = np.zeros((cap, p), np.uint8)
        self._cell_cls = np.zeros((cap, p), np.uint8)
        self._cell_cnt = np.zeros(cap, np.int64)
        self._cell_ng = np.zeros(cap, np.int64)
        n_slots = 1 << int(np.ceil(np.log2(2 * cap)))
        self._slot_keys = np.full(n_slots, _EMPTY, np.int64)
        self._slot_cells = np.full(n_slots, -1, np.int64)
        # n_cells, used slots (cells + tombstones), n_points
        self._meta = np.zeros(3, np.int64)

    @property
    def voxel_size(self) -> float:
        return self.cfg.voxel_size

    def __len__(self) -> int:
        return int(self._meta[2])

    @property
    def n_cells(self) -> int:
        return int(self._meta[0])

    # -- growth -----------------------------------------------------------

    def _grow_cells(self):
        n = self.n_cells
        cap = 2 * len(self._cell_keys)

        def grow(a):
            b = np.zeros((cap,) + a.shape[1:], a.dtype)
            b[:n] = a[:n]
            return b

        self._cell_keys = grow(self._cell_keys)
        self._cell_pts = grow(self._cell_pts)
        self._cell_lbl = grow(self._cell_lbl)
        self._cell_cls = grow(self._cell_cls)
        self._cell_cnt = grow(self._cell_cnt)
        self._cell_ng = grow(self._cell_ng)

    def _rehash(self):
        n = self.n_cells
        n_slots = len(self._slot_keys)
        while 2 * (n + 1) > n_slots // 2:
            n_slots *= 2
        self._slot_keys, self._slot_cells = _rehash(self._cell_keys, n, n_slots)
        self._meta[1] = n

    # -- mutation ---------------------------------------------------------

    def insert_many(self, points, labels, classes=None) -> np.ndarray:
        """Insert points in order; returns a bool mask of points actually stored."""
        pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        n = len(pts)
        out = np.zeros(n, dtype=np.bool_)
        if n == 0:
            return out
        lbls = np.ascontiguousarray(np.broadcast_to(np.asarray(labels, np.uint8), (n,)))
        if classes is None:
            clss = np.zeros(n, np.uint8)
        else:
            clss = np.ascontiguousarray(np.broadcast_to(np.asarray(classes, np.uint8), (n,)))
        keys = pack_keys(keys_of(pts, self.cfg.voxel_size))
        spacing2 = float(self.cfg.min_point_spacing) ** 2
        start = 0
        while True:
            start = _insert_batch(
                self._slot_keys, self._slot_cells, self._cell_keys, self._cell_pts,
                self._cell_lbl, self._cell_cls, self._cell_cnt, self._cell_ng,
                self._meta, keys, pts, lbls, clss, out, start, spacing2,
            )
            if start >= n:
                return out
            if self.n_cells >= len(self._cell_keys):
                self._grow_cells()
            if 2 * (self._meta[1] + 1) > len(self._slot_keys):
                self._rehash()

    def insert(self, p, label: GroundLabel, point_class: PointClass = PointClass.STATIC) -> bool:
        return bool(self.insert_many(np.asarray(p, np.float64)[None, :], [int(label)], [int(point_class)])[0])

    def _cell_index(self, key: int) -> int:
        return int(_lookup_one(self._slot_keys, self._slot_cells, np.int64(key)))

    def _delete_cell(self, c: int, packed: int):
        j = _find(self._slot_keys, np.int64(packed))
        self._slot_keys[j] = _TOMB
        self._slot_cells[j] = -1
        last = self.n_cells - 1
        if c != last:
            for a in (self._cell_keys, self._cell_pts, self._cell_lbl, self._cell_cls,
                      self._cell_cnt, self._cell_ng):
                a[c] = a[last]
            jl = _find(self._slot_keys, self._cell_keys[c])
            self._slot_cells[jl] = c
        self._cell_cnt[last] = 0
        self._meta[0] -= 1

    def remove_exact(self, p) -> bool:
        """Remove one stored point with exactly these coordinates."""
        q = np.asarray(p, dtype=np.float64)
        packed = int(pack_keys(keys_of(q[None, :], self.cfg.voxel_size))[0])
        c = self._cell_index(packed)
        if c < 0:
            return False
        n = int(self._cell_cnt[c])
        hits = np.flatnonzero((self._cell_pts[c, :n] == q).all(axis=1))
        if len(hits) == 0:
            return False
        m = int(hits[0])
        if self._cell_lbl[c, m] == 0:
            self._cell_ng[c] -= 1
        for a in (self._cell_pts, self._cell_lbl, self._cell_cls):
            a[c, m : n - 1] = a[c, m + 1 : n].copy()
        self._cell_cnt[c] = n - 1
        self._meta[2] -= 1
        if n - 1 == 0:
            self._delete_cell(c, packed)
        return True

    def clear_cell(self, key) -> int:
        """Drop every point in voxel ``key``; returns how many were removed."""
        packed = int(pack_keys(np.asarray(key, np.int64)[None, :])[0])
        c = self._cell_index(packed)
        if c < 0:
            return 0
        n = int(self._cell_cnt[c])
        self._meta[2] -= n
        self._delete_cell(c, packed)
        return n

    # -- queries ----------------------------------------------------------

    def _query_keys(self, points: np.ndarray) -> np.ndarray:
        keys = keys_of(points, self.cfg.voxel_size)
        if not self.cfg.search_adjacent:
            return pack_keys(keys)[:, None]
        nb = keys[:, None, :] + _NEIGHBOR_OFFSETS[None, :, :]
        return pack_keys(nb.reshape(-1, 3)).reshape(len(keys), 27)

    def neighbor_counts(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Per query point: (stored neighbor count, non-ground neighbor count)."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        packed = self._query_keys(pts)
        cells = _lookup_many(self._slot_keys, self._slot_cells, packed.ravel()).reshape(packed.shape)
        hit = cells >= 0
        safe = np.where(hit, cells, 0)
        count = np.where(hit, self._cell_cnt[safe], 0).sum(axis=1)
        nonground = np.where(hit, self._cell_ng[safe], 0).sum(axis=1)
        return count, nonground

    def neighbors_in_voxel(self, p) -> list[tuple[Point3, GroundLabel]]:
        q = np.asarray(p, dtype=np.float64)
        out: list[tuple[Point3, GroundLabel]] = []
        for packed in self._query_keys(q[None, :])[0]:
            c = self._cell_index(int(packed))
            if c < 0:
                continue
            n = int(self._cell_cnt[c])
            for m in range(n):
                x, y, z = self._cell_pts[c, m]
                out.append((Point3(float(x), float(y), float(z)), GroundLabel(int(self._cell_lbl[c, m]))))
        return out

    def cells(self) -> Iterator[tuple[VoxelKey, np.ndarray, np.ndarray]]:
        """Yield ``(key, points, labels)`` per cell in ascending key order."""
        n = self.n_cells
        for c in np.argsort(self._cell_keys[:n], kind="stable"):
            k = unpack_keys(self._cell_keys[c : c + 1])[0]
            cnt = int(self._cell_cnt[c])
            yield (
                VoxelKey(int(k[0]), int(k[1]), int(k[2])),
                self._cell_pts[c, :cnt].copy(),
                self._cell_lbl[c, :cnt].copy(),
            )

    def export(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flat ``(points, ground_labels, classes)`` sorted by key then insertion order."""
        n = self.n_cells
        order = np.argsort(self._cell_keys[:n], kind="stable")
        cnt = self._cell_cnt[order]
        valid = np.arange(self.cfg.max_points_per_voxel)[None, :] < cnt[:, None]
        return (
            self._cell_pts[order][valid],
            self._cell_lbl[order][valid],
            self._cell_cls[order][valid],
        )

    def check_invariants(self) -> None:
        """Raise AssertionError if any structural invariant is violated."""
        n = self.n_cells
        cap = self.cfg.max_points_per_voxel
        s2 = self.cfg.min_point_spacing ** 2
        assert int(self._cell_cnt[:n].sum()) == len(self)
        for c in range(n):
            cnt = int(self._cell_cnt[c])
            assert 0 < cnt <= cap
            pts = self._cell_pts[c, :cnt]
            keys = pack_keys(keys_of(pts, self.cfg.voxel_size))
            assert (keys == self._cell_keys[c]).all()
            assert int((self._cell_lbl[c, :cnt] == 0).sum()) == int(self._cell_ng[c])
            d = pts[:, None, :] - pts[None, :, :]
            d2 = (d ** 2).sum(-1)
            np.fill_diagonal(d2, np.inf)
            assert (d2 >= s2).all()
            assert self._cell_index(int(self._cell_keys[c])) == c
