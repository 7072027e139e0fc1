"""Report directory: deterministic JSON summary, CSV tables and figures."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .aggregation import SCORES, heatmap, top_k
from .pipeline import AnalysisResult

REPORT_JSON = "report.json"
FLOAT_FORMAT = "%.12g"


def _clean(x):
    """JSON-safe plain Python values with rounded floats."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if not math.isfinite(x) else float(f"{x:.12g}")
    return x


def report_dict(result: AnalysisResult) -> dict:
    out = result.summary()
    out["tracks"] = [
        {"id": int(r["track"]), "class": r["class"], "peak_frame": int(r["peak_frame"]),
         "dominant_type": r["dominant_type"], "scores": {k: r[k] for k in SCORES}}
        for r in result.tracks.to_dict(orient="records")
    ]
    n_cols = [c for c in result.regions.columns if c.startswith("n_")]
    out["regions"] = [
        {"id": row["region"], "users": int(row["users"]), "scores": {k: row[k] for k in SCORES},
         "detections_by_type": {c[2:]: int(row[c]) for c in n_cols if row[c]}}
        for _, row in result.regions.iterrows()
    ]
    return _clean(out)


def write_report(result: AnalysisResult, out_dir, figures: bool = True) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT_JSON).write_text(json.dumps(report_dict(result), indent=1, sort_keys=True) + "\n")
    result.tracks.to_csv(out / "track_scores.csv", index=False, float_format=FLOAT_FORMAT)
    result.regions.to_csv(out / "region_scores.csv", index=False, float_format=FLOAT_FORMAT)
    result.punctual.to_csv(out / "punctual_scores.csv", index=False, float_format=FLOAT_FORMAT)
    det = result.detections.copy()
    labels = np.array(result.region_labels + [""], dtype=object)
    det["region"] = labels[det["region"].to_numpy()]
    det["home"] = labels[det["home"].to_numpy()]
    det.to_csv(out / "detections.csv", index=True, float_format=FLOAT_FORMAT)
    grids = {}
    for score in SCORES:
        grid = heatmap(result.smap, result.regions[score].to_numpy(), result.config.heatmap_resolution)
        grid.to_frame().to_csv(out / f"heatmap_{score}.csv", index=False, float_format=FLOAT_FORMAT)
        grids[score] = grid
    if figures:
        from .plotting import plot_heatmap, plot_top_tracks
        for score, grid in grids.items():
            plot_heatmap(grid, result.smap, f"{score} region scores", out / f"heatmap_{score}.png")
        plot_top_tracks(result.tracks, out / "top_tracks.png")
    return out


def load_summary(report_dir) -> dict:
    path = Path(report_dir) / REPORT_JSON
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise FileNotFoundError(f"no report at {path}: {exc}") from None


def top_from_report(report_dir, score: str = "relevance", k: int = 10, level: str = "track") -> pd.DataFrame:
    """Ranked tracks or (track, frame) situations with the detections behind them."""
    d = Path(report_dir)
    if level == "track":
        table = pd.read_csv(d / "track_scores.csv")
        ranked = top_k(table, score, k)
        frames = ranked["peak_frame"].to_numpy()
    elif level == "punctual":
        table = pd.read_csv(d / "punctual_scores.csv")
        ranked = top_k(table, score, k)
        frames = ranked["frame"].to_numpy()
    else:
        raise ValueError("level must be 'track' or 'punctual'")
    det = pd.read_csv(d / "detections.csv", usecols=["id", "type", "subject", "start", "end"])
    prov = []
    for t, f in zip(ranked["track"].to_numpy(), frames):
        hit = det[(det["subject"] == t) & (det["start"] <= f) & (det["end"] >= f)]
        prov.append(";".join(f"{i}:{ty}" for i, ty in zip(hit["id"], hit["type"])))
    ranked = ranked.copy()
    ranked.insert(0, "rank", np.arange(1, len(ranked) + 1))
    ranked["detections"] = prov
    return ranked
