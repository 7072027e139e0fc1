"""Density clustering with pluggable distances: DBSCAN and HDBSCAN*.

`distance` arguments accept either
  * a square ndarray of precomputed distances,
  * a callable ``fn(a, b) -> float`` applied to pairs of items, or
  * an object with a ``rows(indices) -> ndarray`` method returning the
    distances from the listed items to all items (vectorized sources).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

NOISE = -1
MATRIX_LIMIT = 5000  # full distance matrices are cached up to this many items
_LAMBDA_MAX = 1e12


@dataclass(frozen=True, eq=False)
class ClusterResult:
    labels: np.ndarray
    cluster_sizes: np.ndarray
    outlier_distance: np.ndarray  # NaN for clustered items, inf when no cluster exists

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_sizes)

    @property
    def noise(self) -> np.ndarray:
        return np.flatnonzero(self.labels == NOISE)


class _Rows:
    def __init__(self, items, distance):
        self.n = len(items)
        self._matrix = None
        if isinstance(distance, np.ndarray):
            if distance.shape != (self.n, self.n):
                raise ValueError("precomputed distance matrix has wrong shape")
            self._matrix = np.asarray(distance, dtype=float)
            return
        if hasattr(distance, "rows"):
            self._fn = distance.rows
        else:
            def rows(idx, items=items, fn=distance):
                return np.array([[fn(items[i], it) for it in items] for i in idx], dtype=float)
            self._fn = rows
        if self.n <= MATRIX_LIMIT:
            self._matrix = self._fn(np.arange(self.n)) if self.n else np.zeros((0, 0))

    def row(self, i: int) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix[i]
        return self._fn(np.array([i]))[0]

    def blocks(self, size: int = 512):
        for start in range(0, self.n, size):
            idx = np.arange(start, min(start + size, self.n))
            yield idx, (self._matrix[idx] if self._matrix is not None else self._fn(idx))


def _dense_labels(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Renumber cluster ids by first appearance in item order."""
    out = np.full(len(raw), NOISE, dtype=np.int64)
    mapping: dict[int, int] = {}
    for i, lab in enumerate(raw):
        if lab == NOISE:
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    sizes = np.bincount(out[out >= 0], minlength=len(mapping)) if mapping else np.zeros(0, dtype=np.int64)
    return out, sizes


def _outlier_distances(rows: _Rows, labels: np.ndarray, reference: np.ndarray) -> np.ndarray:
    out = np.full(len(labels), np.nan)
    noise = np.flatnonzero(labels == NOISE)
    if len(noise) == 0:
        return out
    if not reference.any():
        out[noise] = np.inf
        return out
    for i in noise:
        out[i] = float(rows.row(i)[reference].min())
    return out


def dbscan(items, distance, eps: float, min_samples: int) -> ClusterResult:
    """Classic DBSCAN; `min_samples` counts the point itself.

    Clusters are expanded from core points in index order, so the result is
    deterministic for a given input order. For noise points the outlier
    distance is measured to the nearest core point of any cluster.
    """
    if eps <= 0 or min_samples < 1:
        raise ValueError("eps must be > 0 and min_samples >= 1")
    rows = _Rows(items, distance)
    n = rows.n
    neighbors: list[np.ndarray] = [None] * n
    for idx, block in rows.blocks():
        for k, i in enumerate(idx):
            neighbors[i] = np.flatnonzero(block[k] <= eps)
    core = np.array([len(nb) >= min_samples for nb in neighbors], dtype=bool)

    labels = np.full(n, NOISE, dtype=np.int64)
    current = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = current
        queue = deque([i])
        while queue:
            p = queue.popleft()
            if not core[p]:
                continue
            for q in neighbors[p]:
                if labels[q] == NOISE:
                    labels[q] = current
                    queue.append(q)
        current += 1

    labels, sizes = _dense_labels(labels)
    return ClusterResult(labels, sizes, _outlier_distances(rows, labels, core & (labels >= 0)))


def _prim_mst(rows: _Rows, core: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = rows.n
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    src, dst, w = [], [], []
    cur = 0
    in_tree[0] = True
    for _ in range(n - 1):
        mr = np.maximum(np.maximum(rows.row(cur), core[cur]), core)
        upd = (~in_tree) & (mr < best)
        best[upd] = mr[upd]
        parent[upd] = cur
        cand = np.where(in_tree, np.inf, best)
        nxt = int(np.argmin(cand))
        src.append(parent[nxt])
        dst.append(nxt)
        w.append(best[nxt])
        in_tree[nxt] = True
        cur = nxt
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), np.array(w)


def _single_linkage(n, src, dst, w):
    order = np.argsort(w, kind="stable")
    parent = np.arange(2 * n - 1)
    size = np.ones(2 * n - 1, dtype=np.int64)
    children = np.zeros((n - 1, 2), dtype=np.int64)
    dist = np.zeros(n - 1)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for k, e in enumerate(order):
        a, b = find(src[e]), find(dst[e])
        node = n + k
        children[k] = (a, b)
        dist[k] = w[e]
        size[node] = size[a] + size[b]
        parent[a] = parent[b] = node
    return children, dist, size


def _condense(n, children, dist, size, min_cluster_size):
    """Condensed cluster tree as rows (parent, child, lambda, child_size)."""
    root = 2 * n - 2
    label = {root: n}
    next_label = n + 1
    rows = []

    def leaves(node):
        stack, out = [node], []
        while stack:
            x = stack.pop()
            if x < n:
                out.append(x)
            else:
                stack.extend(children[x - n])
        return out

    queue = deque([root])
    while queue:
        node = queue.popleft()
        if node < n:
            continue
        left, right = children[node - n]
        d = dist[node - n]
        lam = 1.0 / d if d > 0 else _LAMBDA_MAX
        lam = min(lam, _LAMBDA_MAX)
        plabel = label[node]
        lsize, rsize = size[left], size[right]
        big_l, big_r = lsize >= min_cluster_size, rsize >= min_cluster_size
        if big_l and big_r:
            for ch, sz in ((left, lsize), (right, rsize)):
                label[ch] = next_label
                rows.append((plabel, next_label, lam, sz))
                next_label += 1
                queue.append(ch)
        elif not big_l and not big_r:
            for p in leaves(left) + leaves(right):
                rows.append((plabel, p, lam, 1))
        else:
            keep, drop = (left, right) if big_l else (right, left)
            label[keep] = plabel
            for p in leaves(drop):
                rows.append((plabel, p, lam, 1))
            queue.append(keep)
    return rows


def _select_eom(rows, n):
    parents = np.array([r[0] for r in rows], dtype=np.int64)
    childs = np.array([r[1] for r in rows], dtype=np.int64)
    lams = np.array([r[2] for r in rows])
    sizes = np.array([r[3] for r in rows], dtype=np.int64)
    clusters = sorted(set(parents.tolist()) | set(childs[childs >= n].tolist()))
    birth = {n: 0.0}
    for p, c, lam in zip(parents, childs, lams):
        if c >= n:
            birth[int(c)] = float(lam)
    stability = {c: 0.0 for c in clusters}
    for p, lam, sz in zip(parents, lams, sizes):
        stability[int(p)] += (float(lam) - birth[int(p)]) * int(sz)

    child_clusters = {c: [] for c in clusters}
    for p, c in zip(parents, childs):
        if c >= n:
            child_clusters[int(p)].append(int(c))

    selected = {c: True for c in clusters}
    for node in sorted(clusters, reverse=True):
        if node == n:
            continue
        sub = sum(stability[c] for c in child_clusters[node])
        if sub > stability[node]:
            selected[node] = False
            stability[node] = sub
        else:
            stack = list(child_clusters[node])
            while stack:
                x = stack.pop()
                selected[x] = False
                stack.extend(child_clusters[x])
    selected[n] = False  # the root is never a cluster
    chosen = {c for c, s in selected.items() if s}

    cluster_parent = {int(c): int(p) for p, c in zip(parents, childs) if c >= n}
    labels = np.full(n, NOISE, dtype=np.int64)
    for p, c in zip(parents, childs):
        if c >= n:
            continue
        node = int(p)
        while True:
            if node in chosen:
                labels[c] = node
                break
            if node == n:
                break
            node = cluster_parent[node]
    return labels


def hdbscan_cluster(items, distance, min_cluster_size: int) -> ClusterResult:
    """HDBSCAN* with excess-of-mass selection (single cluster not allowed).

    Core distances use ``min_samples = min_cluster_size`` neighbors, self
    included. Noise items carry the raw distance to the nearest member of any
    selected cluster.
    """
    mcs = max(2, int(min_cluster_size))
    rows = _Rows(items, distance)
    n = rows.n
    if n < 2:
        labels = np.full(n, NOISE, dtype=np.int64)
        return ClusterResult(labels, np.zeros(0, dtype=np.int64), np.full(n, np.inf))
    k = min(mcs, n) - 1
    core = np.empty(n)
    for idx, block in rows.blocks():
        core[idx] = np.partition(block, k, axis=1)[:, k]
    src, dst, w = _prim_mst(rows, core)
    children, dist, size = _single_linkage(n, src, dst, w)
    raw = _select_eom(_condense(n, children, dist, size, mcs), n)
    labels, sizes = _dense_labels(raw)
    return ClusterResult(labels, sizes, _outlier_distances(rows, labels, labels >= 0))
