"""Path resampling, conflict-cell rasterization and discrete Frechet distance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dataset_io import Track
from .semantic_map import circle_polygon, rectangle

PATH_STEP = 0.5  # m
CELL_SIZE = 0.5  # m
MIN_MOVE = 0.05  # m; smaller displacements count as standing still
_KEY_OFFSET = 1 << 30


@dataclass(frozen=True, eq=False)
class PolyPath:
    points: np.ndarray
    cumulative_s: np.ndarray
    frames: np.ndarray
    headings: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    @property
    def length(self) -> float:
        return float(self.cumulative_s[-1])


def _collapse(track: Track) -> tuple[np.ndarray, np.ndarray]:
    """Indices of states kept after merging standstill jitter, and per-state arc length."""
    pos = track.positions
    keep = [0]
    last = pos[0]
    for i in range(1, len(pos)):
        if math.hypot(pos[i, 0] - last[0], pos[i, 1] - last[1]) >= MIN_MOVE:
            keep.append(i)
            last = pos[i]
    keep = np.asarray(keep)
    seg = np.linalg.norm(np.diff(pos[keep], axis=0), axis=1)
    kept_s = np.concatenate([[0.0], np.cumsum(seg)])
    # every state inherits the arc length of the last kept state at or before it
    owner = np.searchsorted(keep, np.arange(len(pos)), side="right") - 1
    return keep, kept_s[owner]


def state_arclength(track: Track) -> np.ndarray:
    """Arc length along the driven path for every state of the track."""
    return _collapse(track)[1]


def resample_path(track: Track, step: float = PATH_STEP) -> PolyPath:
    if step <= 0:
        raise ValueError("step must be positive")
    keep, _ = _collapse(track)
    pos = track.positions[keep]
    frames_kept = track.frames[keep]
    if len(keep) == 1:
        return PolyPath(pos.copy(), np.zeros(1), frames_kept.copy(), np.array([track.heading[0]]))

    seg = np.diff(pos, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    s_kept = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = s_kept[-1]
    n_full = int(math.floor(total / step + 1e-9))
    s = step * np.arange(n_full + 1)
    if total - s[-1] > 1e-6:
        s = np.append(s, total)
    s = np.minimum(s, total)
    x = np.interp(s, s_kept, pos[:, 0])
    y = np.interp(s, s_kept, pos[:, 1])
    seg_idx = np.clip(np.searchsorted(s_kept, s, side="right") - 1, 0, len(seg) - 1)
    headings = np.arctan2(seg[seg_idx, 1], seg[seg_idx, 0])
    src = np.clip(np.searchsorted(s_kept, s + 1e-9, side="right") - 1, 0, len(keep) - 1)
    return PolyPath(np.column_stack([x, y]), s, frames_kept[src], headings)


def resample_polyline(points, step: float) -> np.ndarray:
    """Points spaced `step` apart along a polyline (end point kept)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s_in = np.concatenate([[0.0], np.cumsum(seg)])
    total = s_in[-1]
    if total < MIN_MOVE:
        return pts[:1].copy()
    s = np.arange(0.0, total, step)
    if total - s[-1] > 1e-6:
        s = np.append(s, total)
    return np.column_stack([np.interp(s, s_in, pts[:, 0]), np.interp(s, s_in, pts[:, 1])])


def dims_template(length: float = 0.0, width: float = 0.0, radius: float | None = None) -> np.ndarray:
    """Body-frame footprint polygon: a rectangle, or the VRU circle polygon."""
    if radius is not None:
        return circle_polygon(0.0, 0.0, radius)
    return rectangle(0.0, 0.0, 0.0, length, width)


def cell_keys(ix, iy) -> np.ndarray:
    return ((np.asarray(ix, dtype=np.int64) + _KEY_OFFSET) << 32) | (np.asarray(iy, dtype=np.int64) + _KEY_OFFSET)


def key_to_cells(keys) -> tuple[np.ndarray, np.ndarray]:
    keys = np.asarray(keys, dtype=np.int64)
    return (keys >> 32) - _KEY_OFFSET, (keys & 0xFFFFFFFF) - _KEY_OFFSET


@dataclass(frozen=True, eq=False)
class SweptRaster:
    """Cells covered by a footprint swept along a path; per cell the nearest path sample."""

    keys: np.ndarray  # sorted, unique
    s: np.ndarray
    heading: np.ndarray


def swept_raster(path: PolyPath, template: np.ndarray, cell: float = CELL_SIZE) -> SweptRaster:
    pts = path.points
    reach = float(np.max(np.linalg.norm(template, axis=1)))
    g = int(math.ceil(reach / cell)) + 1
    off = np.arange(-g, g + 1)
    ox, oy = np.meshgrid(off, off, indexing="ij")
    ox, oy = ox.ravel(), oy.ravel()

    base_x = np.floor(pts[:, 0] / cell).astype(np.int64)
    base_y = np.floor(pts[:, 1] / cell).astype(np.int64)
    ix = base_x[:, None] + ox[None, :]
    iy = base_y[:, None] + oy[None, :]
    dx = (ix + 0.5) * cell - pts[:, 0:1]
    dy = (iy + 0.5) * cell - pts[:, 1:2]
    # body frame of each path sample
    c, s = np.cos(path.headings)[:, None], np.sin(path.headings)[:, None]
    bx = dx * c + dy * s
    by = -dx * s + dy * c

    inside = np.ones(bx.shape, dtype=bool)
    m = len(template)
    for e in range(m):
        ax, ay = template[e]
        ex, ey = template[(e + 1) % m] - template[e]
        inside &= ex * (by - ay) - ey * (bx - ax) >= -1e-12

    pi, ci = np.nonzero(inside)
    if len(pi) == 0:
        return SweptRaster(np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0))
    keys = cell_keys(ix[pi, ci], iy[pi, ci])
    dist = np.hypot(dx[pi, ci], dy[pi, ci])
    order = np.lexsort((pi, dist, keys))
    keys, pi = keys[order], pi[order]
    first = np.concatenate([[True], keys[1:] != keys[:-1]])
    return SweptRaster(keys[first], path.cumulative_s[pi[first]], path.headings[pi[first]])


@dataclass(frozen=True, eq=False)
class ConflictPointSet:
    keys: np.ndarray
    centers: np.ndarray
    s_a: np.ndarray
    heading_a: np.ndarray
    s_b: np.ndarray
    heading_b: np.ndarray

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def cells(self) -> set[tuple[int, int]]:
        ix, iy = key_to_cells(self.keys)
        return set(zip(ix.tolist(), iy.tolist()))


def intersect_rasters(ra: SweptRaster, rb: SweptRaster, cell: float = CELL_SIZE) -> ConflictPointSet:
    keys, ia, ib = np.intersect1d(ra.keys, rb.keys, assume_unique=True, return_indices=True)
    ix, iy = key_to_cells(keys)
    centers = np.column_stack([(ix + 0.5) * cell, (iy + 0.5) * cell])
    return ConflictPointSet(keys, centers, ra.s[ia], ra.heading[ia], rb.s[ib], rb.heading[ib])


def conflict_points(path_a: PolyPath, fp_a: np.ndarray, path_b: PolyPath, fp_b: np.ndarray,
                    cell: float = CELL_SIZE) -> ConflictPointSet:
    """Cells shared by the two swept footprints. fp_* are body-frame templates (see dims_template)."""
    return intersect_rasters(swept_raster(path_a, fp_a, cell), swept_raster(path_b, fp_b, cell), cell)


def _as_points(p) -> np.ndarray:
    pts = p.points if isinstance(p, PolyPath) else p
    return np.ascontiguousarray(np.asarray(pts, dtype=float).reshape(-1, 2))


def discrete_frechet(a, b) -> float:
    """Discrete Frechet distance between two point sequences (or PolyPaths)."""
    pa, pb = _as_points(a), _as_points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("sequences must be non-empty")
    return float(_kernels.frechet(pa, pb))


def frechet_matrix(sequences) -> np.ndarray:
    seqs = [_as_points(s) for s in sequences]
    if not seqs:
        return np.zeros((0, 0))
    offsets = np.concatenate([[0], np.cumsum([len(s) for s in seqs])]).astype(np.int64)
    return _kernels.frechet_matrix(np.concatenate(seqs), offsets)
