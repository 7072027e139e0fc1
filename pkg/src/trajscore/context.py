"""Context detections: rule checks against the map and density-based outliers per region.

Rule checks (area usage, driving direction, local speed limit) follow the
clemency rule: a state is fine as soon as it behaves correctly in at least one
of its assigned regions. The density checks cluster, per region, the
(heading, speed) behaviour points and the driven trajectory segments.
"""

from __future__ import annotations

import math

import numpy as np
import pandas as pd

from .clustering import NOISE, ClusterResult, dbscan, hdbscan_cluster
from .config import Config
from .dataset_io import Recording, RoadUserClass, TrackState, wrap_angle
from .detections import Detection, DetectionType, concat_tables, table_from_columns
from .geometry import frechet_matrix, resample_polyline
from .semantic_map import Region, RegionType, SemanticMap

SPEED_FLOOR = 1.5  # m/s, lower bound of the speed normaliser in the behaviour distance


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def behavior_min_samples(n: int) -> int:
    return max(2, round_half_up(2 + 0.01 * n))


def trajectory_min_cluster_size(n: int) -> int:
    return max(2, round_half_up(1 + 0.005 * n))


# -- rule checks -------------------------------------------------------------

def check_area_usage(state: TrackState, regions: list[Region], road_class: RoadUserClass,
                     subject: int = -1) -> Detection | None:
    """Violation iff the class is allowed in none of `regions` (empty = off-map)."""
    if any(r.type.allows(road_class) for r in regions):
        return None
    return Detection(DetectionType.AREA_USAGE, subject, 1.0, state.frame)


def direction_conforms(heading, region: Region, points) -> np.ndarray:
    ref = region.direction_at(points)
    return np.abs(wrap_angle(np.asarray(heading) - ref)) <= math.pi / 2


def check_driving_direction(state: TrackState, regions: list[Region], road_class: RoadUserClass,
                            subject: int = -1, min_speed: float = 1.0) -> Detection | None:
    if not road_class.is_motorized or not state.speed > min_speed:
        return None
    directed = [r for r in regions if r.type is RegionType.STREET and r.direction_ref is not None]
    if not directed:
        return None
    p = np.array([[state.x, state.y]])
    if any(bool(direction_conforms(state.heading, r, p)[0]) for r in directed):
        return None
    return Detection(DetectionType.DRIVING_DIRECTION, subject, 1.0, state.frame)


def _state_columns(recording: Recording, memb: pd.DataFrame, names) -> dict[str, np.ndarray]:
    """Gather per-membership-row state values from the tracks."""
    out = {n: np.empty(len(memb)) for n in names}
    if not len(memb):
        return out
    tracks = memb["track"].to_numpy()
    idx = memb["idx"].to_numpy()
    cut = np.flatnonzero(np.diff(tracks)) + 1
    for lo, hi in zip(np.concatenate([[0], cut]), np.concatenate([cut, [len(memb)]])):
        tr = recording.track(int(tracks[lo]))
        for n in names:
            out[n][lo:hi] = getattr(tr, n)[idx[lo:hi]]
    return out


def _per_state(memb: pd.DataFrame, flag: np.ndarray) -> pd.DataFrame:
    """Reduce a per-membership-row flag to one row per state with any()."""
    df = pd.DataFrame({"track": memb["track"].to_numpy(), "frame": memb["frame"].to_numpy(), "flag": flag})
    return df.groupby(["track", "frame"], sort=True)["flag"].any().reset_index()


def area_usage_table(recording: Recording, smap: SemanticMap, memb: pd.DataFrame) -> pd.DataFrame:
    n_reg = len(smap.regions)
    classes = {tr.track_id: tr.road_class for tr in recording.tracks}
    allowed = np.zeros((len(RoadUserClass), n_reg + 1), dtype=bool)
    order = list(RoadUserClass)
    for ci, c in enumerate(order):
        for ri, r in enumerate(smap.regions):
            allowed[ci, ri] = r.type.allows(c)
    cls_idx = np.array([order.index(classes[t]) for t in memb["track"].to_numpy()], dtype=np.int64)
    ok = allowed[cls_idx, memb["region"].to_numpy()] if len(memb) else np.zeros(0, dtype=bool)
    per = _per_state(memb, ok)
    bad = per[~per["flag"]]
    return table_from_columns({"type": np.full(len(bad), "area_usage"), "subject": bad["track"].to_numpy(),
                               "start": bad["frame"].to_numpy(), "end": bad["frame"].to_numpy(),
                               "value": np.ones(len(bad))})


def driving_direction_table(recording: Recording, smap: SemanticMap, memb: pd.DataFrame,
                            cfg: Config) -> pd.DataFrame:
    directed = [i for i, r in enumerate(smap.regions)
                if r.type is RegionType.STREET and r.direction_ref is not None]
    motorized = {tr.track_id for tr in recording.tracks if tr.road_class.is_motorized}
    sub = memb[memb["region"].isin(directed) & memb["track"].isin(motorized)]
    if not len(sub):
        return None
    st = _state_columns(recording, sub, ("x", "y", "heading", "speed"))
    sub = sub[st["speed"] > cfg.direction_min_speed]
    st = {k: v[st["speed"] > cfg.direction_min_speed] for k, v in st.items()}
    if not len(sub):
        return None
    conform = np.zeros(len(sub), dtype=bool)
    reg = sub["region"].to_numpy()
    for ri in np.unique(reg):
        m = reg == ri
        pts = np.column_stack([st["x"][m], st["y"][m]])
        conform[m] = direction_conforms(st["heading"][m], smap.regions[ri], pts)
    per = _per_state(sub, conform)
    bad = per[~per["flag"]]
    return table_from_columns({"type": np.full(len(bad), "driving_direction"),
                               "subject": bad["track"].to_numpy(), "start": bad["frame"].to_numpy(),
                               "end": bad["frame"].to_numpy(), "value": np.ones(len(bad))})


def speed_limit_table(recording: Recording, smap: SemanticMap, memb: pd.DataFrame) -> pd.DataFrame:
    limits = np.array([np.nan if r.speed_limit is None else r.speed_limit for r in smap.regions] + [np.nan])
    if not len(memb) or np.all(np.isnan(limits)):
        return None
    lim = limits[memb["region"].to_numpy()]
    df = pd.DataFrame({"track": memb["track"].to_numpy(), "frame": memb["frame"].to_numpy(), "limit": lim})
    df = df.dropna().groupby(["track", "frame"], sort=True)["limit"].max().reset_index()
    if not len(df):
        return None
    speed = np.empty(len(df))
    for tid, g in df.groupby("track", sort=False):
        tr = recording.track(int(tid))
        speed[g.index.to_numpy()] = tr.speed[g["frame"].to_numpy() - tr.frames[0]]
    hit = speed > df["limit"].to_numpy()
    n = int(hit.sum())
    return table_from_columns({"type": np.full(n, "velocity"), "subject": df["track"].to_numpy()[hit],
                               "start": df["frame"].to_numpy()[hit], "end": df["frame"].to_numpy()[hit],
                               "value": speed[hit], "limit": df["limit"].to_numpy()[hit]})


# -- driving behaviour clustering ---------------------------------------------

def behavior_distance(psi1, v1, psi2, v2):
    """Distance between two (heading, speed) behaviour points."""
    dpsi = wrap_angle(np.asarray(psi1, dtype=float) - np.asarray(psi2, dtype=float))
    scale = np.maximum(np.maximum(v1, v2), SPEED_FLOOR)
    return np.sqrt(dpsi ** 2 + ((np.asarray(v1) - np.asarray(v2)) / scale) ** 2)


class BehaviorDistance:
    """Row-wise behaviour distances for the clustering routines."""

    def __init__(self, psi, v):
        self.psi = np.asarray(psi, dtype=float)
        self.v = np.asarray(v, dtype=float)

    def rows(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        return behavior_distance(self.psi[idx, None], self.v[idx, None], self.psi[None, :], self.v[None, :])


def behavior_clustering(psi, v, eps: float = 0.7, small_share: float = 0.10):
    """Outlying behaviour points of one region.

    Returns (mask of detected points, value per point, ClusterResult). The
    value is the distance to the nearest member of the largest cluster, or
    `eps` when there is no cluster or the point belongs to it.
    """
    psi = np.asarray(psi, dtype=float)
    v = np.asarray(v, dtype=float)
    n = len(psi)
    if n < 2:
        return np.zeros(n, dtype=bool), np.zeros(n), None
    dist = BehaviorDistance(psi, v)
    res = dbscan(np.arange(n), dist, eps, behavior_min_samples(n))
    small = np.flatnonzero(res.cluster_sizes < small_share * n)
    mask = (res.labels == NOISE) | np.isin(res.labels, small)
    values = np.full(n, eps)
    if res.n_clusters:
        largest = int(np.argmax(res.cluster_sizes))
        members = res.labels == largest
        for i in np.flatnonzero(mask & ~members):
            values[i] = float(dist.rows([i])[0][members].min())
    return mask, np.where(mask, values, 0.0), res


def behavior_table(recording: Recording, memb: pd.DataFrame, cfg: Config) -> pd.DataFrame:
    """Behaviour detections over the points sampled at `behavior_sample_hz` per track."""
    step = max(1, round_half_up(recording.frame_rate / cfg.behavior_sample_hz))
    sub = memb[memb["idx"].to_numpy() % step == 0]
    if not len(sub):
        return None
    st = _state_columns(recording, sub, ("heading", "speed"))
    last = {tr.track_id: int(tr.frames[-1]) for tr in recording.tracks}
    reg = sub["region"].to_numpy()
    tables = []
    for ri in np.unique(reg):
        m = np.flatnonzero(reg == ri)
        mask, values, _ = behavior_clustering(st["heading"][m], st["speed"][m], cfg.behavior_eps,
                                              cfg.behavior_small_cluster_share)
        if not mask.any():
            continue
        rows = sub.iloc[m[mask]]
        start = rows["frame"].to_numpy()
        end = np.minimum(start + step - 1, np.array([last[t] for t in rows["track"].to_numpy()]))
        tables.append(table_from_columns({
            "type": np.full(len(rows), "driving_behavior"), "subject": rows["track"].to_numpy(),
            "start": start, "end": end, "value": values[mask], "region": np.full(len(rows), ri)}))
    return concat_tables(tables)


# -- trajectory clustering ---------------------------------------------------

def region_episodes(memb: pd.DataFrame) -> pd.DataFrame:
    """Contiguous (track, region) visits: columns track, region, lo, hi (state indices, inclusive)."""
    if not len(memb):
        return pd.DataFrame({"track": [], "region": [], "lo": [], "hi": []}, dtype=np.int64)
    df = memb[["track", "region", "idx"]].sort_values(["track", "region", "idx"], kind="stable")
    t, r, i = (df[c].to_numpy() for c in ("track", "region", "idx"))
    new = np.ones(len(df), dtype=bool)
    new[1:] = (t[1:] != t[:-1]) | (r[1:] != r[:-1]) | (i[1:] != i[:-1] + 1)
    ep = np.cumsum(new) - 1
    out = pd.DataFrame({"track": t, "region": r, "idx": i, "ep": ep}).groupby("ep").agg(
        track=("track", "first"), region=("region", "first"), lo=("idx", "min"), hi=("idx", "max"))
    return out.reset_index(drop=True)


def trajectory_clustering(segments) -> tuple[np.ndarray, np.ndarray, ClusterResult | None]:
    """Outlying trajectory segments of one region: (mask, Frechet outlier distance, result).

    Nothing is flagged when no cluster forms at all, since there is no
    reference behaviour to deviate from.
    """
    n = len(segments)
    if n < 2:
        return np.zeros(n, dtype=bool), np.zeros(n), None
    dist = frechet_matrix(segments)
    res = hdbscan_cluster(np.arange(n), dist, trajectory_min_cluster_size(n))
    mask = (res.labels == NOISE) & np.isfinite(res.outlier_distance)
    return mask, np.where(mask, res.outlier_distance, 0.0), res


def trajectory_table(recording: Recording, memb: pd.DataFrame, cfg: Config) -> pd.DataFrame:
    eps = region_episodes(memb)
    tables = []
    for ri, g in eps.groupby("region", sort=True):
        segs = []
        for t, lo, hi in zip(g["track"].to_numpy(), g["lo"].to_numpy(), g["hi"].to_numpy()):
            tr = recording.track(int(t))
            segs.append(resample_polyline(tr.positions[lo:hi + 1], cfg.trajectory_step))
        mask, values, _ = trajectory_clustering(segs)
        if not mask.any():
            continue
        sel = g[mask]
        first = np.array([recording.track(int(t)).frames[0] for t in sel["track"].to_numpy()])
        tables.append(table_from_columns({
            "type": np.full(len(sel), "trajectory"), "subject": sel["track"].to_numpy(),
            "start": first + sel["lo"].to_numpy(), "end": first + sel["hi"].to_numpy(),
            "value": values[mask], "region": np.full(len(sel), ri)}))
    return concat_tables(tables)


def detect_context(recording: Recording, smap: SemanticMap, memb: pd.DataFrame, cfg: Config) -> pd.DataFrame:
    return concat_tables([
        area_usage_table(recording, smap, memb),
        driving_direction_table(recording, smap, memb, cfg),
        speed_limit_table(recording, smap, memb),
        behavior_table(recording, memb, cfg),
        trajectory_table(recording, memb, cfg),
    ])
