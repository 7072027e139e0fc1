"""Compiled inner loops (numba). Pure functions on float64 arrays."""

import numpy as np
from numba import njit


@njit(cache=True)
def polygon_area(poly):
    n = poly.shape[0]
    acc = 0.0
    for i in range(n):
        j = (i + 1) % n
        acc += poly[i, 0] * poly[j, 1] - poly[j, 0] * poly[i, 1]
    return 0.5 * acc


@njit(cache=True)
def _clip_half_plane(pts, count, ax, ay, bx, by):
    # keeps the left side of a->b (inclusive)
    out = np.empty((2 * count + 2, 2))
    k = 0
    if count == 0:
        return out, 0
    ex, ey = bx - ax, by - ay
    px, py = pts[count - 1, 0], pts[count - 1, 1]
    pside = ex * (py - ay) - ey * (px - ax)
    for i in range(count):
        cx, cy = pts[i, 0], pts[i, 1]
        cside = ex * (cy - ay) - ey * (cx - ax)
        if cside >= 0.0:
            if pside < 0.0:
                t = pside / (pside - cside)
                out[k, 0] = px + t * (cx - px)
                out[k, 1] = py + t * (cy - py)
                k += 1
            out[k, 0] = cx
            out[k, 1] = cy
            k += 1
        elif pside >= 0.0:
            t = pside / (pside - cside)
            out[k, 0] = px + t * (cx - px)
            out[k, 1] = py + t * (cy - py)
            k += 1
        px, py, pside = cx, cy, cside
    return out, k


@njit(cache=True)
def clip_area(subject, convex_ccw):
    """Area of (simple polygon `subject`) intersected with a convex CCW polygon."""
    pts = subject.copy()
    count = pts.shape[0]
    m = convex_ccw.shape[0]
    for e in range(m):
        a = convex_ccw[e]
        b = convex_ccw[(e + 1) % m]
        pts, count = _clip_half_plane(pts, count, a[0], a[1], b[0], b[1])
        if count < 3:
            return 0.0
    return abs(polygon_area(pts[:count]))


@njit(cache=True)
def clip_areas_batch(subject, footprints):
    """Overlap area of one polygon with each convex CCW footprint in a (K, m, 2) stack."""
    k = footprints.shape[0]
    out = np.zeros(k)
    sx0, sy0 = subject[:, 0].min(), subject[:, 1].min()
    sx1, sy1 = subject[:, 0].max(), subject[:, 1].max()
    for i in range(k):
        fp = footprints[i]
        if fp[:, 0].max() < sx0 or fp[:, 0].min() > sx1 or fp[:, 1].max() < sy0 or fp[:, 1].min() > sy1:
            continue
        out[i] = clip_area(subject, fp)
    return out


@njit(cache=True)
def frechet(a, b):
    n, m = a.shape[0], b.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    for i in range(n):
        for j in range(m):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            d = np.sqrt(dx * dx + dy * dy)
            if i == 0 and j == 0:
                cur[j] = d
            elif i == 0:
                cur[j] = max(cur[j - 1], d)
            elif j == 0:
                cur[j] = max(prev[j], d)
            else:
                best = min(prev[j], prev[j - 1], cur[j - 1])
                cur[j] = max(best, d)
        prev, cur = cur, prev
    return prev[m - 1]


@njit(cache=True)
def frechet_matrix(points, offsets):
    """Symmetric pairwise discrete Frechet matrix for concatenated sequences."""
    n = offsets.shape[0] - 1
    out = np.zeros((n, n))
    for i in range(n):
        a = points[offsets[i]:offsets[i + 1]]
        for j in range(i + 1, n):
            d = frechet(a, points[offsets[j]:offsets[j + 1]])
            out[i, j] = d
            out[j, i] = d
    return out


@njit(cache=True)
def cheapest_context(offsets, gamma, frac, max_exhaustive):
    """Per group of rows: weights of the region subset with the lowest weighted gamma.

    A subset is admissible when its footprint fractions sum to >= 1; if none
    is, all rows are used. Weights are fractions renormalised over the subset.
    Ties go to the subset found first (fewest regions, cheapest first).
    """
    out = np.zeros(gamma.shape[0])
    for g in range(offsets.shape[0] - 1):
        lo, hi = offsets[g], offsets[g + 1]
        k = hi - lo
        if k == 1:
            out[lo] = 1.0
            continue
        total = 0.0
        for i in range(lo, hi):
            total += frac[i]
        if total < 1.0 - 1e-9 or k > max_exhaustive:
            if total < 1.0 - 1e-9:
                for i in range(lo, hi):
                    out[i] = frac[i] / total
                continue
            # greedy by ascending gamma
            order = np.argsort(gamma[lo:hi], kind="mergesort")
            acc = 0.0
            for j in order:
                if acc >= 1.0 - 1e-9:
                    break
                out[lo + j] = frac[lo + j]
                acc += frac[lo + j]
            for i in range(lo, hi):
                out[i] /= acc
            continue
        best = np.inf
        best_mask = 0
        best_size = k + 1
        for mask in range(1, 1 << k):
            fs = 0.0
            gs = 0.0
            size = 0
            for j in range(k):
                if mask & (1 << j):
                    fs += frac[lo + j]
                    gs += frac[lo + j] * gamma[lo + j]
                    size += 1
            if fs < 1.0 - 1e-9:
                continue
            val = gs / fs
            if val < best - 1e-12 or (abs(val - best) <= 1e-12 and size < best_size):
                best = val
                best_mask = mask
                best_size = size
        fs = 0.0
        for j in range(k):
            if best_mask & (1 << j):
                fs += frac[lo + j]
        for j in range(k):
            if best_mask & (1 << j):
                out[lo + j] = frac[lo + j] / fs
    return out
