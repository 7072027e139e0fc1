"""Vehicle relation indicators: THW, TTC, DRAC, modified delta-TTCP and waiting periods.

All bilateral indicators measure distances along the subject's actually
driven path rather than in a straight line. Following geometry (THW, TTC,
DRAC) requires the partner to sit on the subject's future path; crossing
geometry (delta-mTTCP) uses every shared cell of the two swept footprints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from .config import Config
from .dataset_io import Recording, Track, wrap_angle
from .detections import Detection, table_from_blocks, to_detection
from .geometry import (PolyPath, SweptRaster, ConflictPointSet, intersect_rasters, resample_path,
                       state_arclength, swept_raster)
from .semantic_map import footprint_template

_CHUNK = 4_000_000  # max elements of one frames x cells block


@dataclass(eq=False)
class TrackGeometry:
    track: Track
    path: PolyPath
    state_s: np.ndarray
    template: np.ndarray
    cell_size: float
    _tree: cKDTree | None = field(default=None, repr=False)
    _raster: SweptRaster | None = field(default=None, repr=False)

    @classmethod
    def build(cls, track: Track, cfg: Config) -> TrackGeometry:
        return cls(track, resample_path(track, cfg.path_step), state_arclength(track),
                   footprint_template(track), cfg.cell_size)

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.path.points)
        return self._tree

    @property
    def raster(self) -> SweptRaster:
        if self._raster is None:
            self._raster = swept_raster(self.path, self.template, self.cell_size)
        return self._raster


@dataclass(frozen=True, eq=False)
class PairGate:
    """Gated pairs (a < b) per frame, sorted by (frame, a, b)."""

    frames: np.ndarray
    a: np.ndarray
    b: np.ndarray
    radius: float

    def __len__(self) -> int:
        return len(self.frames)

    def pairs_at(self, frame: int) -> list[tuple[int, int]]:
        lo, hi = np.searchsorted(self.frames, [frame, frame + 1])
        return list(zip(self.a[lo:hi].tolist(), self.b[lo:hi].tolist()))

    def by_pair(self) -> dict[tuple[int, int], np.ndarray]:
        if not len(self):
            return {}
        order = np.lexsort((self.frames, self.b, self.a))
        a, b, f = self.a[order], self.b[order], self.frames[order]
        cut = np.flatnonzero((np.diff(a) != 0) | (np.diff(b) != 0)) + 1
        out = {}
        for lo, hi in zip(np.concatenate([[0], cut]), np.concatenate([cut, [len(a)]])):
            out[(int(a[lo]), int(b[lo]))] = f[lo:hi]
        return out


def candidate_pairs(recording: Recording, radius: float = 75.0) -> PairGate:
    """Pairs within `radius` per frame, found by uniform spatial hashing (cell = radius)."""
    if not recording.tracks:
        z = np.zeros(0, dtype=np.int64)
        return PairGate(z, z, z, radius)
    states = pd.DataFrame({
        "frame": np.concatenate([t.frames for t in recording.tracks]),
        "id": np.concatenate([np.full(len(t), t.track_id, dtype=np.int64) for t in recording.tracks]),
        "x": np.concatenate([t.x for t in recording.tracks]),
        "y": np.concatenate([t.y for t in recording.tracks]),
    })
    states["cx"] = np.floor(states["x"] / radius).astype(np.int64)
    states["cy"] = np.floor(states["y"] / radius).astype(np.int64)
    parts = []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            shifted = states.rename(columns={"id": "id_b", "x": "x_b", "y": "y_b"})
            shifted = shifted.assign(cx=shifted["cx"] - dx, cy=shifted["cy"] - dy)
            m = states.merge(shifted, on=["frame", "cx", "cy"])
            m = m[m["id"] < m["id_b"]]
            m = m[np.hypot(m["x"] - m["x_b"], m["y"] - m["y_b"]) <= radius]
            parts.append(m[["frame", "id", "id_b"]].to_numpy(dtype=np.int64))
    allp = np.concatenate(parts)
    order = np.lexsort((allp[:, 2], allp[:, 1], allp[:, 0]))
    allp = allp[order]
    return PairGate(allp[:, 0], allp[:, 1], allp[:, 2], radius)


def _project_on_path(geo: TrackGeometry, pts: np.ndarray):
    """Arc length, lateral distance and tangent of the projection onto the path."""
    path = geo.path
    n = len(pts)
    if len(path) < 2:
        return np.zeros(n), np.full(n, np.inf), np.zeros(n)
    _, j = geo.tree.query(pts)
    nseg = len(path) - 1
    best_d = np.full(n, np.inf)
    best_s = np.zeros(n)
    best_h = np.zeros(n)
    for k in (np.clip(j - 1, 0, nseg - 1), np.clip(j, 0, nseg - 1)):
        a = path.points[k]
        ab = path.points[k + 1] - a
        l2 = np.maximum((ab ** 2).sum(axis=1), 1e-18)
        t = np.clip(((pts - a) * ab).sum(axis=1) / l2, 0.0, 1.0)
        d = np.linalg.norm(pts - (a + t[:, None] * ab), axis=1)
        s = path.cumulative_s[k] + t * (path.cumulative_s[k + 1] - path.cumulative_s[k])
        better = d < best_d
        best_d = np.where(better, d, best_d)
        best_s = np.where(better, s, best_s)
        best_h = np.where(better, np.arctan2(ab[:, 1], ab[:, 0]), best_h)
    return best_s, best_d, best_h


def _following(gs: TrackGeometry, gp: TrackGeometry, frames: np.ndarray, cfg: Config):
    """Along-path centre gap from subject to partner, and a mask where the partner is followed."""
    ts, tp = gs.track, gp.track
    i_s = frames - ts.frames[0]
    i_p = frames - tp.frames[0]
    pts = np.column_stack([tp.x[i_p], tp.y[i_p]])
    s_proj, lat, tangent = _project_on_path(gs, pts)
    gap = s_proj - gs.state_s[i_s]
    ok = (gap > 0) & (lat <= cfg.follow_lateral_tol)
    ok &= np.abs(wrap_angle(tp.heading[i_p] - tangent)) < math.radians(cfg.follow_heading_max_deg)
    return gap, ok, i_s, i_p


def following_indicators(gs: TrackGeometry, gp: TrackGeometry, frames: np.ndarray, cfg: Config) -> pd.DataFrame:
    """THW, TTC and DRAC detections of subject `gs` following `gp` over `frames`."""
    return table_from_blocks(_following_blocks(gs, gp, frames, cfg))


def _following_blocks(gs: TrackGeometry, gp: TrackGeometry, frames: np.ndarray, cfg: Config) -> list[dict]:
    frames = np.asarray(frames, dtype=np.int64)
    gap, ok, i_s, i_p = _following(gs, gp, frames, cfg)
    ts, tp = gs.track, gp.track
    v_s, v_p = ts.speed[i_s], tp.speed[i_p]
    out = []

    thw_ok = ok & (v_s >= cfg.standing_speed)
    thw = np.divide(gap, v_s, out=np.full(len(gap), np.inf), where=thw_ok)
    sel = thw_ok & (thw <= cfg.thw_max)
    if sel.any():
        out.append({
            "type": np.full(sel.sum(), "thw"), "subject": np.full(sel.sum(), ts.track_id),
            "partner": np.full(sel.sum(), tp.track_id), "start": frames[sel], "end": frames[sel],
            "value": thw[sel]})

    closing = v_s - v_p
    bumper = gap - ts.half_length - tp.half_length
    close_ok = ok & (closing > 0) & (bumper > 0)
    ttc = np.divide(bumper, closing, out=np.full(len(gap), np.inf), where=close_ok)
    sel = close_ok & (ttc > 0) & (ttc <= cfg.ttc_max)
    if sel.any():
        out.append({
            "type": np.full(sel.sum(), "ttc"), "subject": np.full(sel.sum(), ts.track_id),
            "partner": np.full(sel.sum(), tp.track_id), "start": frames[sel], "end": frames[sel],
            "value": ttc[sel]})

    drac = np.divide(closing ** 2, 2.0 * bumper, out=np.zeros(len(gap)), where=close_ok)
    sel = close_ok & (drac >= cfg.drac_min)
    if sel.any():
        out.append({
            "type": np.full(sel.sum(), "drac"), "subject": np.full(sel.sum(), ts.track_id),
            "partner": np.full(sel.sum(), tp.track_id), "start": frames[sel], "end": frames[sel],
            "value": drac[sel]})
    return out


def crossing_cells(ga: TrackGeometry, gb: TrackGeometry, beta_min: float) -> ConflictPointSet:
    """Shared cells whose path directions differ by at least `beta_min`."""
    cps = intersect_rasters(ga.raster, gb.raster, ga.cell_size)
    if not len(cps):
        return cps
    keep = np.abs(wrap_angle(cps.heading_a - cps.heading_b)) >= beta_min
    return ConflictPointSet(cps.keys[keep], cps.centers[keep], cps.s_a[keep], cps.heading_a[keep],
                            cps.s_b[keep], cps.heading_b[keep])


def min_time_difference(cps: ConflictPointSet, s_a, v_a, s_b, v_b, horizon: float):
    """Per frame: delta-mTTCP, index of the critical cell, and both mTTCPs.

    s_* are the users' current arc lengths and v_* their speeds (arrays over
    frames). Frames without any admissible cell get an infinite delta.
    """
    nf, nc = len(s_a), len(cps)
    delta = np.full(nf, np.inf)
    ccp = np.full(nf, -1, dtype=np.int64)
    m_a = np.full(nf, np.nan)
    m_b = np.full(nf, np.nan)
    if nc == 0 or nf == 0:
        return delta, ccp, m_a, m_b
    step = max(1, _CHUNK // nc)
    for lo in range(0, nf, step):
        hi = min(nf, lo + step)
        ra = cps.s_a[None, :] - s_a[lo:hi, None]
        rb = cps.s_b[None, :] - s_b[lo:hi, None]
        ta = ra / v_a[lo:hi, None]
        tb = rb / v_b[lo:hi, None]
        valid = (ra >= 0) & (rb >= 0) & (ta <= horizon) & (tb <= horizon)
        d = np.where(valid, np.abs(ta - tb), np.inf)
        k = np.argmin(d, axis=1)
        rows = np.arange(hi - lo)
        delta[lo:hi] = d[rows, k]
        found = np.isfinite(delta[lo:hi])
        ccp[lo:hi] = np.where(found, k, -1)
        m_a[lo:hi] = np.where(found, ta[rows, k], np.nan)
        m_b[lo:hi] = np.where(found, tb[rows, k], np.nan)
    return delta, ccp, m_a, m_b


def crossing_indicator(ga: TrackGeometry, gb: TrackGeometry, frames: np.ndarray, cfg: Config) -> pd.DataFrame:
    """delta-mTTCP detections for both users of the pair over `frames`."""
    return table_from_blocks([_crossing_block(ga, gb, frames, cfg)])


def _crossing_block(ga: TrackGeometry, gb: TrackGeometry, frames: np.ndarray, cfg: Config) -> dict | None:
    frames = np.asarray(frames, dtype=np.int64)
    ta, tb = ga.track, gb.track
    cps = crossing_cells(ga, gb, cfg.beta_min)
    if not len(cps):
        return None
    ia, ib = frames - ta.frames[0], frames - tb.frames[0]
    va, vb = ta.speed[ia], tb.speed[ib]
    moving = (va >= cfg.standing_speed) & (vb >= cfg.standing_speed)
    if not moving.any():
        return None
    frames, ia, ib, va, vb = frames[moving], ia[moving], ib[moving], va[moving], vb[moving]
    sa, sb = ga.state_s[ia], gb.state_s[ib]
    # cells outside every frame's horizon can be dropped up front
    reach = ((cps.s_a >= sa.min()) & (cps.s_a <= sa.max() + cfg.horizon * va.max())
             & (cps.s_b >= sb.min()) & (cps.s_b <= sb.max() + cfg.horizon * vb.max()))
    if not reach.any():
        return None
    cps = ConflictPointSet(cps.keys[reach], cps.centers[reach], cps.s_a[reach], cps.heading_a[reach],
                           cps.s_b[reach], cps.heading_b[reach])
    delta, ccp, m_a, m_b = min_time_difference(cps, sa, va, sb, vb, cfg.horizon)
    sel = np.isfinite(delta)
    if not sel.any():
        return None
    n = int(sel.sum())
    cx, cy = cps.centers[ccp[sel], 0], cps.centers[ccp[sel], 1]
    both = {
        "type": np.full(2 * n, "dmttcp"),
        "subject": np.concatenate([np.full(n, ta.track_id), np.full(n, tb.track_id)]),
        "partner": np.concatenate([np.full(n, tb.track_id), np.full(n, ta.track_id)]),
        "start": np.tile(frames[sel], 2), "end": np.tile(frames[sel], 2),
        "value": np.tile(delta[sel], 2),
        "mttcp_subject": np.concatenate([m_a[sel], m_b[sel]]),
        "mttcp_partner": np.concatenate([m_b[sel], m_a[sel]]),
        "ccp_x": np.tile(cx, 2), "ccp_y": np.tile(cy, 2),
    }
    return both


def waiting_periods(track: Track, frame_rate: float, cfg: Config) -> pd.DataFrame:
    """One WP detection per standing frame whose stop is followed by moving on."""
    return table_from_blocks([_waiting_block(track, frame_rate, cfg)])


def _waiting_block(track: Track, frame_rate: float, cfg: Config) -> dict | None:
    v = track.speed
    standing = v < cfg.standing_speed
    if not standing.any():
        return None
    edges = np.diff(np.concatenate([[0], standing.astype(np.int8), [0]]))
    starts, ends = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)
    moving_later = np.concatenate([np.maximum.accumulate((v > cfg.moving_on_speed)[::-1])[::-1][1:], [False]])
    frames, values = [], []
    for lo, hi in zip(starts, ends):
        if (hi - lo) / frame_rate < cfg.wp_min_duration:
            continue
        if not moving_later[hi - 1]:
            continue  # stop at the end of the track, possibly parking
        frames.append(track.frames[lo:hi])
        values.append(np.arange(hi - lo) / frame_rate)
    if not frames:
        return None
    f = np.concatenate(frames)
    return {"type": np.full(len(f), "wp"), "subject": np.full(len(f), track.track_id),
            "start": f, "end": f, "value": np.concatenate(values)}


class RelationDetector:
    """Relation indicators for one recording, with per-track geometry caches."""

    def __init__(self, recording: Recording, config: Config | None = None):
        self.recording = recording
        self.config = config or Config()
        self._geo: dict[int, TrackGeometry] = {}

    def geometry(self, track_id: int) -> TrackGeometry:
        if track_id not in self._geo:
            self._geo[track_id] = TrackGeometry.build(self.recording.track(track_id), self.config)
        return self._geo[track_id]

    def _one(self, table, type_name, subject) -> Detection | None:
        if table is None or not len(table):
            return None
        rows = table[(table["type"] == type_name) & (table["subject"] == subject)]
        return to_detection(rows.iloc[0]) if len(rows) else None

    def _shared(self, subject, partner, frame) -> bool:
        ts, tp = self.recording.track(subject), self.recording.track(partner)
        return ts.frames[0] <= frame <= ts.frames[-1] and tp.frames[0] <= frame <= tp.frames[-1]

    def compute_thw(self, subject: int, partner: int, frame: int) -> Detection | None:
        if not self._shared(subject, partner, frame):
            return None
        t = following_indicators(self.geometry(subject), self.geometry(partner), np.array([frame]), self.config)
        return self._one(t, "thw", subject)

    def compute_ttc(self, subject: int, partner: int, frame: int) -> Detection | None:
        if not self._shared(subject, partner, frame):
            return None
        t = following_indicators(self.geometry(subject), self.geometry(partner), np.array([frame]), self.config)
        return self._one(t, "ttc", subject)

    def compute_drac(self, subject: int, partner: int, frame: int) -> Detection | None:
        if not self._shared(subject, partner, frame):
            return None
        t = following_indicators(self.geometry(subject), self.geometry(partner), np.array([frame]), self.config)
        return self._one(t, "drac", subject)

    def compute_dmttcp(self, subject: int, partner: int, frame: int) -> Detection | None:
        if not self._shared(subject, partner, frame):
            return None
        t = crossing_indicator(self.geometry(subject), self.geometry(partner), np.array([frame]), self.config)
        return self._one(t, "dmttcp", subject)

    def compute_wp(self, track_id: int) -> list[Detection]:
        t = waiting_periods(self.recording.track(track_id), self.recording.frame_rate, self.config)
        return [] if t is None else [to_detection(r) for _, r in t.iterrows()]

    def detect_all(self, gate: PairGate | None = None) -> pd.DataFrame:
        cfg = self.config
        gate = gate if gate is not None else candidate_pairs(self.recording, cfg.gating_radius)
        blocks = []
        for (a, b), frames in gate.by_pair().items():
            ga, gb = self.geometry(a), self.geometry(b)
            blocks.extend(_following_blocks(ga, gb, frames, cfg))
            blocks.extend(_following_blocks(gb, ga, frames, cfg))
            blocks.append(_crossing_block(ga, gb, frames, cfg))
        for tr in self.recording.tracks:
            blocks.append(_waiting_block(tr, self.recording.frame_rate, cfg))
        return table_from_blocks(blocks)
