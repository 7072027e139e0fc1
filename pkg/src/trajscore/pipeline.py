"""Two-pass analysis of one recording.

Pass 1 assigns states to regions and collects every detection. Pass 2
weights the detections by their region context and aggregates scores.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import __version__
from .aggregation import (anomaly_groups, dataset_scores, interacting_counts, region_scores,
                          track_scores)
from .config import Config
from .context import detect_context, region_episodes
from .dataset_io import Recording
from .detections import concat_tables, sort_table
from .relations import RelationDetector, candidate_pairs
from .scoring import (RegionContext, anomaly_table, interaction_table, punctual_scores, score_table,
                      weighted_detections)
from .semantic_map import SemanticMap, membership_table, region_ids
from .vehicle_state import vehicle_state_table

logger = logging.getLogger(__name__)

BASELINE_TYPES = ("wp", "dmttcp")


@dataclass(eq=False)
class AnalysisResult:
    recording: Recording
    smap: SemanticMap
    config: Config
    membership: pd.DataFrame
    detections: pd.DataFrame  # canonical order, with score/gamma/home/weighted columns
    context: RegionContext
    punctual: pd.DataFrame
    tracks: pd.DataFrame
    regions: pd.DataFrame
    dataset: dict
    baseline: dict
    interacting_users: int
    interacting_pairs: int

    @property
    def region_labels(self) -> list[str]:
        return region_ids(self.smap)

    def summary(self) -> dict:
        counts = self.detections["type"].value_counts()
        return {
            "recording_id": self.recording.recording_id,
            "location_id": self.recording.location_id,
            "duration": float(self.recording.duration),
            "frame_rate": float(self.recording.frame_rate),
            "track_count": len(self.recording.tracks),
            "config_hash": self.config.hash(),
            "code_version": __version__,
            "dataset_scores": self.dataset,
            "baseline_scores": self.baseline,
            "interacting_users": self.interacting_users,
            "interacting_pairs": self.interacting_pairs,
            "detection_count": int(len(self.detections)),
            "detection_counts_by_type": {k: int(counts[k]) for k in sorted(counts.index)},
        }


def collect_detections(recording: Recording, smap: SemanticMap, memb: pd.DataFrame,
                       cfg: Config) -> pd.DataFrame:
    gate = candidate_pairs(recording, cfg.gating_radius)
    logger.info("%d gated pair-frames", len(gate))
    rel = RelationDetector(recording, cfg).detect_all(gate)
    state = [vehicle_state_table(tr) for tr in recording.tracks]
    ctx = detect_context(recording, smap, memb, cfg)
    return sort_table(concat_tables([rel, *state, ctx]))


def _interaction_only(recording, det, scores, cfg) -> float:
    inter = interaction_table(det, scores)
    empty = pd.DataFrame({"track": [], "frame": [], "anomaly": []})
    punct = punctual_scores(inter, empty, cfg)
    groups = pd.DataFrame({"region": [], "track": [], "type": [], "weighted": []})
    return float(track_scores(recording, punct, groups)["interaction"].sum())


def analyze_recording(recording: Recording, smap: SemanticMap, config: Config | None = None) -> AnalysisResult:
    cfg = config or Config()
    labels = region_ids(smap)
    # pass 1
    memb = membership_table(recording.tracks, smap)
    det = collect_detections(recording, smap, memb, cfg)
    logger.info("%d detections", len(det))
    # pass 2
    scores = score_table(det, cfg)
    weighted, ctx = weighted_detections(det, scores, memb, len(labels), cfg)
    det = det.copy()
    for c in ("score", "gamma", "home", "weighted"):
        det[c] = weighted[c].to_numpy()
    inter = interaction_table(det, scores)
    anom = anomaly_table(det, weighted["weighted"].to_numpy())
    punct = punctual_scores(inter, anom, cfg)
    groups = anomaly_groups(det, weighted)
    tracks = track_scores(recording, punct, groups)
    episodes = region_episodes(memb)
    regions = region_scores(recording, punct, groups, episodes, labels, det, weighted)
    base_mask = det["type"].isin(BASELINE_TYPES).to_numpy()
    baseline = {"interaction": _interaction_only(recording, det[base_mask], scores[base_mask], cfg)}
    users, pairs = interacting_counts(det)
    return AnalysisResult(recording, smap, cfg, memb, det, ctx, punct, tracks, regions,
                          dataset_scores(tracks, groups), baseline, users, pairs)
