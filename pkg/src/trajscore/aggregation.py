"""Lifting punctual scores to tracks, regions and whole recordings."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .detections import BILATERAL_TYPES
from .semantic_map import SemanticMap

SCORES = ("interaction", "anomaly", "relevance")


def positive_variation(series) -> float:
    """Sum of the rises of a series; the first value counts as a rise from zero."""
    s = np.asarray(series, dtype=float)
    if not len(s):
        return 0.0
    return float(max(s[0], 0.0) + np.maximum(np.diff(s), 0.0).sum())


def dense_series(punct: pd.DataFrame, track_id: int, first_frame: int, n: int, column: str) -> np.ndarray:
    """Punctual scores of one track over all of its frames (zero where nothing was detected)."""
    out = np.zeros(n)
    sel = punct[punct["track"] == track_id]
    out[sel["frame"].to_numpy() - first_frame] = sel[column].to_numpy()
    return out


def _track_slices(punct: pd.DataFrame):
    t = punct["track"].to_numpy()
    cut = np.flatnonzero(np.diff(t)) + 1
    starts = np.concatenate([[0], cut])
    ends = np.concatenate([cut, [len(t)]])
    return {int(t[lo]): (lo, hi) for lo, hi in zip(starts, ends)} if len(t) else {}


def anomaly_groups(det: pd.DataFrame, weighted: pd.DataFrame) -> pd.DataFrame:
    """Maximum weighted score per (home region, road user, detection type)."""
    df = pd.DataFrame({"region": weighted["home"].to_numpy(), "track": det["subject"].to_numpy(),
                       "type": det["type"].to_numpy(), "weighted": weighted["weighted"].to_numpy()})
    if not len(df):
        return pd.DataFrame({"region": [], "track": [], "type": [], "weighted": []})
    return df.groupby(["region", "track", "type"], sort=True)["weighted"].max().reset_index()


def anomaly_abstract(groups: pd.DataFrame, track: int | None = None, region: int | None = None) -> float:
    g = groups
    if track is not None:
        g = g[g["track"] == track]
    if region is not None:
        g = g[g["region"] == region]
    return float(g["weighted"].sum())


def track_scores(recording, punct: pd.DataFrame, groups: pd.DataFrame) -> pd.DataFrame:
    """Per track: positive-variation interaction/relevance, grouped-maximum anomaly, peak frame."""
    slices = _track_slices(punct)
    anom = groups.groupby("track")["weighted"].sum() if len(groups) else pd.Series(dtype=float)
    dominant = {}
    if len(groups):
        top = groups.sort_values(["track", "weighted", "type"], ascending=[True, False, True], kind="stable")
        dominant = top.drop_duplicates("track").set_index("track")["type"].to_dict()
    rows = []
    for tr in sorted(recording.tracks, key=lambda t: t.track_id):
        n, f0 = len(tr), int(tr.frames[0])
        inter = np.zeros(n)
        rel = np.zeros(n)
        if tr.track_id in slices:
            lo, hi = slices[tr.track_id]
            idx = punct["frame"].to_numpy()[lo:hi] - f0
            inter[idx] = punct["interaction"].to_numpy()[lo:hi]
            rel[idx] = punct["relevance"].to_numpy()[lo:hi]
        peak = int(tr.frames[int(np.argmax(rel))]) if rel.any() else -1
        rows.append({"track": tr.track_id, "class": tr.road_class.value,
                     "interaction": positive_variation(inter),
                     "anomaly": float(anom.get(tr.track_id, 0.0)),
                     "relevance": positive_variation(rel), "peak_frame": peak,
                     "dominant_type": dominant.get(tr.track_id, "")})
    cols = ["track", "class", "interaction", "anomaly", "relevance", "peak_frame", "dominant_type"]
    return pd.DataFrame(rows, columns=cols)


def region_scores(recording, punct: pd.DataFrame, groups: pd.DataFrame, episodes: pd.DataFrame,
                  labels: list[str], det: pd.DataFrame | None = None,
                  weighted: pd.DataFrame | None = None) -> pd.DataFrame:
    """Per region: positive variation over each visit, summed over visits; grouped-maximum anomaly.

    `episodes` holds contiguous visits (track, region, lo, hi) in state indices.
    """
    slices = _track_slices(punct)
    inter = np.zeros(len(labels))
    rel = np.zeros(len(labels))
    cache = {}
    for t, r, lo, hi in episodes[["track", "region", "lo", "hi"]].itertuples(index=False):
        if t not in slices:
            continue
        if t not in cache:
            tr = recording.track(int(t))
            a, b = slices[t]
            idx = punct["frame"].to_numpy()[a:b] - int(tr.frames[0])
            si, sr = np.zeros(len(tr)), np.zeros(len(tr))
            si[idx] = punct["interaction"].to_numpy()[a:b]
            sr[idx] = punct["relevance"].to_numpy()[a:b]
            cache[t] = (si, sr)
        si, sr = cache[t]
        inter[r] += positive_variation(si[lo:hi + 1])
        rel[r] += positive_variation(sr[lo:hi + 1])
    anom = np.zeros(len(labels))
    if len(groups):
        s = groups.groupby("region")["weighted"].sum()
        anom[s.index.to_numpy().astype(int)] = s.to_numpy()
    users = np.zeros(len(labels), dtype=np.int64)
    if len(episodes):
        u = episodes.groupby("region")["track"].nunique()
        users[u.index.to_numpy().astype(int)] = u.to_numpy()
    out = pd.DataFrame({"region": labels, "users": users, "interaction": inter, "anomaly": anom,
                        "relevance": rel})
    if det is not None and weighted is not None and len(det):
        br = pd.DataFrame({"region": weighted["home"].to_numpy(), "type": det["type"].to_numpy()})
        br = br[br["region"] >= 0].groupby(["region", "type"]).size().unstack(fill_value=0)
        for t in sorted(br.columns):
            col = np.zeros(len(labels), dtype=np.int64)
            col[br.index.to_numpy().astype(int)] = br[t].to_numpy()
            out[f"n_{t}"] = col
    return out


def dataset_scores(tracks: pd.DataFrame, groups: pd.DataFrame) -> dict[str, float]:
    return {"interaction": float(tracks["interaction"].sum()),
            "anomaly": float(groups["weighted"].sum()) if len(groups) else 0.0,
            "relevance": float(tracks["relevance"].sum())}


def interacting_counts(det: pd.DataFrame) -> tuple[int, int]:
    """Road users and unordered pairs with at least one bilateral relation detection."""
    bil = det[det["type"].isin(BILATERAL_TYPES)]
    if not len(bil):
        return 0, 0
    a, b = bil["subject"].to_numpy(), bil["partner"].to_numpy()
    users = np.unique(np.concatenate([a, b]))
    pairs = np.unique(np.column_stack([np.minimum(a, b), np.maximum(a, b)]), axis=0)
    return int(len(users)), int(len(pairs))


def top_k(table: pd.DataFrame, score: str, k: int) -> pd.DataFrame:
    """Stable descending ranking; ties broken by track id, then frame."""
    if score not in SCORES:
        raise ValueError(f"score must be one of {SCORES}")
    keys = [c for c in ("track", "frame") if c in table.columns]
    ranked = table.sort_values(keys, kind="stable").sort_values(score, ascending=False, kind="stable")
    return ranked.head(max(int(k), 0)).reset_index(drop=True)


# -- heatmaps -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HeatmapGrid:
    x: np.ndarray  # cell centre coordinates
    y: np.ndarray
    values: np.ndarray  # shape (len(y), len(x))
    resolution: float

    def to_frame(self) -> pd.DataFrame:
        xx, yy = np.meshgrid(self.x, self.y)
        return pd.DataFrame({"x": xx.ravel(), "y": yy.ravel(), "value": self.values.ravel()})


def _covered_cells(poly: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Boolean (ny, nx) mask of cell centres inside the polygon (even-odd rule, vectorized)."""
    xx, yy = np.meshgrid(xs, ys)
    inside = np.zeros(xx.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if y1 == y2:
            continue
        cond = (y1 > yy) != (y2 > yy)
        xc = x1 + (yy - y1) * (x2 - x1) / (y2 - y1)
        inside ^= cond & (xc > xx)
    return inside


def heatmap(smap: SemanticMap, values, resolution: float = 2.0) -> HeatmapGrid:
    """Spread each region's value uniformly over the cells whose centres it covers.

    Overlapping regions add up. A region too small to cover any cell centre
    puts its whole value into the cell containing its centroid.
    """
    values = np.asarray(values, dtype=float)[:len(smap.regions)]
    x0, y0, x1, y1 = smap.bounds
    nx = max(1, int(math.ceil((x1 - x0) / resolution)))
    ny = max(1, int(math.ceil((y1 - y0) / resolution)))
    xs = x0 + resolution * (np.arange(nx) + 0.5)
    ys = y0 + resolution * (np.arange(ny) + 0.5)
    grid = np.zeros((ny, nx))
    for r, v in zip(smap.regions, values):
        if v == 0:
            continue
        mask = _covered_cells(r.polygon, xs, ys)
        k = int(mask.sum())
        if k:
            grid[mask] += v / k
        else:
            c = r.polygon.mean(axis=0)
            ix = min(nx - 1, max(0, int((c[0] - x0) // resolution)))
            iy = min(ny - 1, max(0, int((c[1] - y0) // resolution)))
            grid[iy, ix] += v
    return HeatmapGrid(xs, ys, grid, resolution)


def compare_table(summaries: list[dict]) -> pd.DataFrame:
    """One row per analysed recording: raw dataset scores and per-track normalised scores."""
    rows = []
    for s in summaries:
        n = max(int(s.get("track_count", 0)), 1)
        ds, base = s["dataset_scores"], s.get("baseline_scores", {})
        row = {"recording_id": s["recording_id"], "location_id": s.get("location_id", ""),
               "duration": s.get("duration", 0.0), "track_count": s.get("track_count", 0)}
        for k in SCORES:
            row[k] = ds[k]
        for k in SCORES:
            row[f"{k}_per_track"] = ds[k] / n
        row["baseline_interaction"] = base.get("interaction", 0.0)
        row["baseline_interaction_per_track"] = base.get("interaction", 0.0) / n
        rows.append(row)
    return pd.DataFrame(rows)
