"""Normal-driving limits for individual vehicle states and speed-limit checks.

Limit functions take speed in km/h and return SI values (m/s^2, rad/s, rad).
"""

from __future__ import annotations

import math

import numpy as np
import pandas as pd

from .dataset_io import RoadUserClass, Track, TrackState
from .detections import Detection, DetectionType, table_from_columns

MPS_TO_KMH = 3.6
SIDESLIP_LIMIT = math.radians(10.0)


def limit_lon(v_kmh):
    v = np.asarray(v_kmh, dtype=float)
    out = np.where(v <= 50, 4.0, np.where(v <= 100, 4.0 - 2.0 * (v - 50) / 50.0, 2.0))
    return float(out) if out.ndim == 0 else out


def limit_lat(v_kmh):
    v = np.asarray(v_kmh, dtype=float)
    out = np.select(
        [v <= 40, v <= 50, v <= 100],
        [2.5 + 4.5 * v / 40.0, 7.0, 7.0 - 4.0 * (v - 50) / 50.0],
        default=3.0,
    )
    return float(out) if out.ndim == 0 else out


def limit_yaw(v_kmh):
    v = np.asarray(v_kmh, dtype=float)
    out = np.where(v <= 50, 50.0 / 180.0 * math.pi, 15.0 / 180.0 * math.pi)
    return float(out) if out.ndim == 0 else out


def limit_sideslip(v_kmh=0.0):
    v = np.asarray(v_kmh, dtype=float)
    out = np.full(v.shape, SIDESLIP_LIMIT)
    return float(out) if out.ndim == 0 else out


_CHECKS = (
    ("lon_accel", "accel_lon", limit_lon),
    ("lat_accel", "accel_lat", limit_lat),
    ("yaw_rate", "yaw_rate", limit_yaw),
    ("sideslip", "sideslip", limit_sideslip),
)


def check_vehicle_state(state: TrackState, road_class: RoadUserClass, subject: int = -1) -> list[Detection]:
    """Detections for every state quantity whose magnitude exceeds its limit."""
    if road_class.is_vru:
        return []
    v_kmh = state.speed * MPS_TO_KMH
    out = []
    for name, attr, fn in _CHECKS:
        observed = getattr(state, attr)
        limit = fn(v_kmh)
        if abs(observed) > limit:
            out.append(Detection(DetectionType(name), subject, observed, state.frame, aux={"limit": limit}))
    return out


def vehicle_state_table(track: Track) -> pd.DataFrame | None:
    if track.is_vru:
        return None
    v_kmh = track.speed * MPS_TO_KMH
    parts = []
    for name, attr, fn in _CHECKS:
        observed = np.asarray(getattr(track, attr))
        limit = fn(v_kmh)
        hit = np.abs(observed) > limit
        if hit.any():
            n = int(hit.sum())
            parts.append(table_from_columns({
                "type": np.full(n, name), "subject": np.full(n, track.track_id),
                "start": track.frames[hit], "end": track.frames[hit],
                "value": observed[hit], "limit": np.broadcast_to(limit, observed.shape)[hit]}))
    return pd.concat(parts, ignore_index=True) if parts else None


def effective_speed_limit(limits) -> float | None:
    """Most permissive limit among the assigned regions (None if no region has one)."""
    limits = [x for x in limits if x is not None]
    return max(limits) if limits else None


def check_speed_limit(speed: float, limits, frame: int = 0, subject: int = -1) -> Detection | None:
    limit = effective_speed_limit(limits)
    if limit is None or not speed > limit:
        return None
    return Detection(DetectionType.VELOCITY, subject, float(speed), frame, aux={"limit": float(limit)})
