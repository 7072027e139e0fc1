"""Detection scores and punctual interaction, anomaly and relevance scores.

Pass 1 of the pipeline produces the detection table and the membership table;
`RegionContext` summarises both and pass 2 weights every detection by how
rare its type is in the least unusual region context it belongs to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import _kernels
from .config import Config
from .detections import RELATION_TYPES, REGION_BOUND_TYPES, Detection

RECIPROCAL_FLOOR = 1e-3
MAX_EXHAUSTIVE = 16


def _floor(x):
    return np.maximum(x, RECIPROCAL_FLOOR)


def raw_scores(types, values, limits=None, mttcp_sum=None, kappa: float = 1.0) -> np.ndarray:
    """Unclamped score per detection (vectorized)."""
    types = np.asarray(types).astype(str)
    v = np.asarray(values, dtype=float)
    n = len(v)
    lim = np.full(n, np.nan) if limits is None else np.asarray(limits, dtype=float)
    msum = np.full(n, np.nan) if mttcp_sum is None else np.asarray(mttcp_sum, dtype=float)
    out = np.full(n, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        rules = {
            "thw": lambda: 1.0 / _floor(v),
            "dmttcp": lambda: (1.0 / _floor(v)) * (4.0 / _floor(msum)),
            "ttc": lambda: 2.0 * kappa / _floor(v),
            "drac": lambda: kappa / 5.0 * v,
            "wp": lambda: np.sqrt(np.maximum(v, 0.0)),
            "lon_accel": lambda: 0.1 * (np.abs(v) - lim),
            "lat_accel": lambda: 2.0 * (np.abs(v) - lim),
            "sideslip": lambda: 25.0 * (np.abs(v) - lim),
            "yaw_rate": lambda: np.abs(v) - lim,
            "area_usage": lambda: np.full(n, 5.0),
            "driving_direction": lambda: np.full(n, 4.0),
            "velocity": lambda: 10.0 / lim * (v - lim),
            "driving_behavior": lambda: 1.2 * v,
            "trajectory": lambda: v,
        }
        for name in np.unique(types):
            if name not in rules:
                raise ValueError(f"unknown detection type {name!r}")
            m = types == name
            out[m] = rules[name]()[m]
    return out


def clamp_scores(types, raw, cfg: Config) -> np.ndarray:
    caps = cfg.caps()
    types = np.asarray(types).astype(str)
    cap = np.array([caps[t] for t in types]) if len(types) else np.zeros(0)
    return np.clip(raw, 0.0, cap)


def score_table(det: pd.DataFrame, cfg: Config) -> np.ndarray:
    raw = raw_scores(det["type"].to_numpy(), det["value"].to_numpy(), det["limit"].to_numpy(),
                     (det["mttcp_subject"] + det["mttcp_partner"]).to_numpy(), cfg.kappa)
    return clamp_scores(det["type"].to_numpy(), raw, cfg)


def score_detection(d: Detection, cfg: Config | None = None) -> float:
    cfg = cfg or Config()
    msum = d.aux.get("mttcp_subject", np.nan) + d.aux.get("mttcp_partner", np.nan)
    raw = raw_scores([d.type.value], [d.value], [d.aux.get("limit", np.nan)], [msum], cfg.kappa)
    return float(clamp_scores([d.type.value], raw, cfg)[0])


def relevance_punctual(s_i, s_a, cfg: Config | None = None):
    cfg = cfg or Config()
    return s_i * s_a + cfg.gamma_i * s_i + cfg.gamma_a * s_a


# -- interaction ---------------------------------------------------------------

def interaction_table(det: pd.DataFrame, scores: np.ndarray) -> pd.DataFrame:
    """Punctual interaction per (track, frame) with at least one relation detection.

    Columns: track, frame, base, partners, mutual, interaction.
    """
    rel = det["type"].isin(RELATION_TYPES).to_numpy()
    d = pd.DataFrame({"track": det["subject"].to_numpy()[rel], "frame": det["start"].to_numpy()[rel],
                      "partner": det["partner"].to_numpy()[rel], "score": scores[rel]})
    if not len(d):
        return pd.DataFrame({c: [] for c in ("track", "frame", "base", "partners", "mutual", "interaction")})
    g = d.groupby(["track", "frame"], sort=True)
    per = pd.DataFrame({"base": g["score"].sum()})
    bil = d[d["partner"] >= 0]
    per["partners"] = bil.groupby(["track", "frame"])["partner"].nunique()
    per["partners"] = per["partners"].fillna(0).astype(np.int64)
    per = per.reset_index()

    # partner i's engagements with everybody but the subject
    links = bil.groupby(["track", "frame", "partner"], sort=True)["score"].sum().reset_index()
    other = links.rename(columns={"track": "i", "partner": "j", "score": "s_ij"})
    m = links[["track", "frame", "partner"]].rename(columns={"partner": "i"})
    m = m.merge(per.rename(columns={"track": "i", "base": "base_i", "partners": "r_i"}),
                on=["i", "frame"], how="left")
    back = other.rename(columns={"j": "track", "s_ij": "s_back"})
    m = m.merge(back, on=["i", "frame", "track"], how="left")
    m["base_i"] = m["base_i"].fillna(0.0)
    m["r_i"] = m["r_i"].fillna(0).astype(np.int64)
    has_back = m["s_back"].notna()
    m["r_excl"] = m["r_i"] - has_back.astype(np.int64)
    m["s_excl"] = m["base_i"] - m["s_back"].fillna(0.0)
    m["mutual"] = 0.1 * m["r_excl"] * m["s_excl"]
    mutual = m.groupby(["track", "frame"])["mutual"].sum()
    per = per.merge(mutual.reset_index(), on=["track", "frame"], how="left")
    per["mutual"] = per["mutual"].fillna(0.0)
    per["interaction"] = per["base"] * (1 + 0.1 * per["partners"]) + per["mutual"]
    return per


def interaction_punctual(track: int, frame: int, det: pd.DataFrame, cfg: Config | None = None) -> float:
    cfg = cfg or Config()
    sel = det[det["start"] == frame]
    if not len(sel):
        return 0.0
    tab = interaction_table(sel, score_table(sel, cfg))
    row = tab[(tab["track"] == track) & (tab["frame"] == frame)]
    return float(row["interaction"].iloc[0]) if len(row) else 0.0


# -- anomaly -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RegionContext:
    """Users per region and detection counts per (region, type)."""

    users: np.ndarray  # indexed by region
    counts: pd.Series  # MultiIndex (region, type) -> M
    gamma_cap: float = 10.0

    def count(self, region: int, type_name: str) -> int:
        return int(self.counts.get((region, type_name), 0))

    def gamma(self, region, type_name, count=None):
        """Rarity weight U / M^(3/2), capped."""
        m = self.count(region, type_name) if count is None else count
        return gamma_weight(self.users[region], m, self.gamma_cap)


def gamma_weight(users, count, cap: float = 10.0):
    users = np.asarray(users, dtype=float)
    count = np.asarray(count, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(count > 0, users / count ** 1.5, 0.0)
    g = np.minimum(g, cap)
    return float(g) if g.ndim == 0 else g


def detection_regions(det: pd.DataFrame, memb: pd.DataFrame) -> pd.DataFrame:
    """Rows (det, region, fraction): the regions each detection belongs to."""
    ids = np.arange(len(det))
    bound = det["type"].isin(REGION_BOUND_TYPES).to_numpy() & (det["region"].to_numpy() >= 0)
    parts = [pd.DataFrame({"det": ids[bound], "region": det["region"].to_numpy()[bound],
                           "fraction": np.ones(int(bound.sum()))})]
    free = pd.DataFrame({"det": ids[~bound], "track": det["subject"].to_numpy()[~bound],
                         "frame": det["start"].to_numpy()[~bound]})
    m = free.merge(memb[["track", "frame", "region", "fraction"]], on=["track", "frame"], how="inner")
    parts.append(m[["det", "region", "fraction"]])
    out = pd.concat(parts, ignore_index=True)
    return out.sort_values(["det", "region"], kind="stable").reset_index(drop=True)


def build_context(det: pd.DataFrame, memb: pd.DataFrame, n_regions: int, cfg: Config,
                  det_regions: pd.DataFrame | None = None) -> RegionContext:
    """`n_regions` includes the off-map pseudo region."""
    dr = detection_regions(det, memb) if det_regions is None else det_regions
    users = np.zeros(n_regions, dtype=np.int64)
    if len(memb):
        u = memb.groupby("region")["track"].nunique()
        users[u.index.to_numpy()] = u.to_numpy()
    types = det["type"].to_numpy()[dr["det"].to_numpy()] if len(dr) else np.zeros(0, dtype=str)
    counts = pd.DataFrame({"region": dr["region"].to_numpy(), "type": types}).groupby(
        ["region", "type"]).size()
    return RegionContext(users, counts, cfg.gamma_cap)


def context_weights(det_regions: pd.DataFrame, gamma: np.ndarray, exhaustive: bool = True) -> np.ndarray:
    """Weight per (det, region) row; rows must be grouped by det."""
    d = det_regions["det"].to_numpy()
    if not len(d):
        return np.zeros(0)
    cut = np.flatnonzero(np.diff(d)) + 1
    offsets = np.concatenate([[0], cut, [len(d)]]).astype(np.int64)
    frac = det_regions["fraction"].to_numpy(dtype=float)
    return _kernels.cheapest_context(offsets, np.asarray(gamma, dtype=float), frac,
                                     MAX_EXHAUSTIVE if exhaustive else 0)


def select_context(gammas, fractions, exhaustive: bool = True) -> np.ndarray:
    """Weights of one detection's candidate regions."""
    dr = pd.DataFrame({"det": np.zeros(len(gammas), dtype=np.int64), "fraction": fractions})
    return context_weights(dr, np.asarray(gammas, dtype=float), exhaustive)


def weighted_detections(det: pd.DataFrame, scores: np.ndarray, memb: pd.DataFrame, n_regions: int,
                        cfg: Config) -> tuple[pd.DataFrame, RegionContext]:
    """Per detection: effective gamma, home region and weighted score."""
    dr = detection_regions(det, memb)
    ctx = build_context(det, memb, n_regions, cfg, dr)
    types = det["type"].to_numpy()[dr["det"].to_numpy()] if len(dr) else np.zeros(0, dtype=str)
    counts = ctx.counts.reindex(pd.MultiIndex.from_arrays([dr["region"].to_numpy(), types])).to_numpy()
    g = gamma_weight(ctx.users[dr["region"].to_numpy()], counts, cfg.gamma_cap) if len(dr) else np.zeros(0)
    w = context_weights(dr, g)
    rows = pd.DataFrame({"det": dr["det"].to_numpy(), "region": dr["region"].to_numpy(), "w": w, "wg": w * g})
    eff = rows.groupby("det")["wg"].sum()
    chosen = rows[rows["w"] > 0].sort_values(["det", "w", "region"], ascending=[True, False, True], kind="stable")
    home = chosen.drop_duplicates("det").set_index("det")["region"]
    out = pd.DataFrame(index=np.arange(len(det)))
    out["gamma"] = eff.reindex(out.index).fillna(0.0).to_numpy()
    out["home"] = home.reindex(out.index).fillna(-1).astype(np.int64).to_numpy()
    out["score"] = scores
    out["weighted"] = scores * out["gamma"].to_numpy()
    return out, ctx


def anomaly_table(det: pd.DataFrame, weighted: np.ndarray) -> pd.DataFrame:
    """Punctual anomaly per (track, frame); spanning detections count at every frame they cover."""
    if not len(det):
        return pd.DataFrame({"track": [], "frame": [], "anomaly": []})
    start = det["start"].to_numpy()
    span = det["end"].to_numpy() - start + 1
    rep = np.repeat(np.arange(len(det)), span)
    offs = np.arange(len(rep)) - np.repeat(np.cumsum(span) - span, span)
    df = pd.DataFrame({"track": det["subject"].to_numpy()[rep], "frame": start[rep] + offs,
                       "anomaly": np.asarray(weighted)[rep]})
    return df.groupby(["track", "frame"], sort=True)["anomaly"].sum().reset_index()


def anomaly_punctual(track: int, frame: int, det: pd.DataFrame, weighted: np.ndarray) -> float:
    active = ((det["subject"] == track) & (det["start"] <= frame) & (det["end"] >= frame)).to_numpy()
    return float(np.asarray(weighted)[active].sum())


def punctual_scores(inter: pd.DataFrame, anom: pd.DataFrame, cfg: Config) -> pd.DataFrame:
    """Outer join of interaction and anomaly per (track, frame) plus relevance."""
    df = inter[["track", "frame", "interaction"]].merge(anom, on=["track", "frame"], how="outer")
    df = df.fillna({"interaction": 0.0, "anomaly": 0.0})
    df["track"] = df["track"].astype(np.int64)
    df["frame"] = df["frame"].astype(np.int64)
    df["relevance"] = relevance_punctual(df["interaction"].to_numpy(), df["anomaly"].to_numpy(), cfg)
    return df.sort_values(["track", "frame"], kind="stable").reset_index(drop=True)
