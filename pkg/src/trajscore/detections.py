"""Detection records.

Pipelines keep detections in a flat DataFrame (one row per detection);
`Detection` is the per-record view used by the single-shot APIs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd


class DetectionType(enum.Enum):
    THW = "thw"
    TTC = "ttc"
    DRAC = "drac"
    DMTTCP = "dmttcp"
    WP = "wp"
    LON_ACCEL = "lon_accel"
    LAT_ACCEL = "lat_accel"
    SIDESLIP = "sideslip"
    YAW_RATE = "yaw_rate"
    AREA_USAGE = "area_usage"
    DRIVING_DIRECTION = "driving_direction"
    VELOCITY = "velocity"
    DRIVING_BEHAVIOR = "driving_behavior"
    TRAJECTORY = "trajectory"

    @property
    def is_relation(self) -> bool:
        return self.value in RELATION_TYPES

    @property
    def is_bilateral(self) -> bool:
        return self.value in BILATERAL_TYPES


RELATION_TYPES = ("thw", "ttc", "drac", "dmttcp", "wp")
BILATERAL_TYPES = ("thw", "ttc", "drac", "dmttcp")
STATE_TYPES = ("lon_accel", "lat_accel", "sideslip", "yaw_rate")
REGION_BOUND_TYPES = ("driving_behavior", "trajectory")
ALL_TYPES = tuple(t.value for t in DetectionType)

AUX_COLUMNS = ("limit", "mttcp_subject", "mttcp_partner", "ccp_x", "ccp_y")
COLUMNS = ("type", "subject", "partner", "start", "end", "value", "region") + AUX_COLUMNS


@dataclass(frozen=True)
class Detection:
    type: DetectionType
    subject: int
    value: float
    start: int
    end: int | None = None
    partner: int | None = None
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.end is None:
            object.__setattr__(self, "end", self.start)
        if self.type.is_bilateral and self.partner is None:
            raise ValueError(f"{self.type.value} detection needs a partner")
        if not math.isfinite(self.value):
            raise ValueError("detection value must be finite")

    @property
    def frame(self) -> int:
        return self.start


def empty_table() -> pd.DataFrame:
    return table_from_columns({c: [] for c in COLUMNS})


def table_from_columns(cols: dict) -> pd.DataFrame:
    n = len(next(iter(cols.values()))) if cols else 0
    data = {}
    for c in COLUMNS:
        if c in cols:
            data[c] = np.asarray(cols[c])
        elif c in ("partner", "region"):
            data[c] = np.full(n, -1, dtype=np.int64)
        else:
            data[c] = np.full(n, np.nan)
    df = pd.DataFrame(data)
    for c in ("subject", "partner", "start", "end", "region"):
        df[c] = df[c].astype(np.int64)
    df["value"] = df["value"].astype(float)
    df["type"] = df["type"].astype(str)
    return df


def concat_tables(tables) -> pd.DataFrame:
    tables = [t for t in tables if t is not None and len(t)]
    if not tables:
        return empty_table()
    return pd.concat(tables, ignore_index=True)


def sort_table(df: pd.DataFrame) -> pd.DataFrame:
    """Canonical ordering: (start, subject, partner, type)."""
    out = df.sort_values(["start", "subject", "partner", "type", "end", "region"], kind="stable")
    out = out.reset_index(drop=True)
    out.index.name = "id"
    return out


def to_detection(row) -> Detection:
    aux = {k: float(row[k]) for k in AUX_COLUMNS if k in row and not pd.isna(row[k])}
    if "region" in row and int(row["region"]) >= 0:
        aux["region"] = int(row["region"])
    partner = int(row["partner"])
    return Detection(type=DetectionType(row["type"]), subject=int(row["subject"]),
                     partner=None if partner < 0 else partner, start=int(row["start"]),
                     end=int(row["end"]), value=float(row["value"]), aux=aux)


def to_table(dets) -> pd.DataFrame:
    dets = list(dets)
    if not dets:
        return empty_table()
    cols = {c: [] for c in COLUMNS}
    for d in dets:
        cols["type"].append(d.type.value)
        cols["subject"].append(d.subject)
        cols["partner"].append(-1 if d.partner is None else d.partner)
        cols["start"].append(d.start)
        cols["end"].append(d.end)
        cols["value"].append(d.value)
        cols["region"].append(int(d.aux.get("region", -1)))
        for k in AUX_COLUMNS:
            cols[k].append(float(d.aux.get(k, np.nan)))
    return table_from_columns(cols)


def table_from_blocks(blocks) -> pd.DataFrame:
    """One table from many column dicts (cheaper than concatenating small frames)."""
    blocks = [b for b in blocks if b is not None and len(b["type"])]
    if not blocks:
        return empty_table()
    cols = {}
    for c in COLUMNS:
        parts = []
        for b in blocks:
            n = len(b["type"])
            if c in b:
                parts.append(np.asarray(b[c]))
            elif c in ("partner", "region"):
                parts.append(np.full(n, -1, dtype=np.int64))
            else:
                parts.append(np.full(n, np.nan))
        cols[c] = np.concatenate(parts)
    return table_from_columns(cols)
