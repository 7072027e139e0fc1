"""Loading inD-style trajectory recordings.

A recording consists of three CSV files (tracks, tracksMeta, recordingMeta).
Everything is converted to SI units exactly once, here: headings arrive in
degrees and leave as radians in (-pi, pi].
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

STANDING_SPEED = 0.5  # m/s, noise floor for "standing"
VRU_RADIUS = 2.5  # m

TRACK_COLUMNS = (
    "recordingId", "trackId", "frame", "xCenter", "yCenter", "heading", "width",
    "length", "xVelocity", "yVelocity", "xAcceleration", "yAcceleration",
)
TRACK_META_COLUMNS = (
    "recordingId", "trackId", "initialFrame", "finalFrame", "numFrames", "width",
    "length", "class",
)
RECORDING_META_COLUMNS = ("recordingId", "locationId", "frameRate", "duration")


class DatasetError(Exception):
    """Base class for ingestion failures."""


class MissingColumn(DatasetError):
    def __init__(self, name: str, path: str | Path = ""):
        self.name = name
        super().__init__(f"missing column {name!r} in {path}")


class NonContiguousFrames(DatasetError):
    def __init__(self, track_id: int, detail: str = ""):
        self.track_id = track_id
        super().__init__(f"track {track_id}: frames not contiguous {detail}".rstrip())


class UnitParse(DatasetError):
    def __init__(self, row: int, path: str | Path = "", column: str = ""):
        self.row = row
        super().__init__(f"{path}: cannot parse numeric value in row {row} column {column!r}")


class RoadUserClass(enum.Enum):
    CAR = "car"
    TRUCK_BUS = "truck_bus"
    VAN = "van"
    MOTORCYCLE = "motorcycle"
    BICYCLE = "bicycle"
    PEDESTRIAN = "pedestrian"
    UNKNOWN = "unknown"

    @property
    def is_vru(self) -> bool:
        return self in (RoadUserClass.BICYCLE, RoadUserClass.PEDESTRIAN)

    @property
    def is_motorized(self) -> bool:
        # unknown is treated as motorized for all rule checks
        return not self.is_vru

    @classmethod
    def parse(cls, raw: str) -> RoadUserClass:
        key = str(raw).strip().lower().replace("-", "_").replace(" ", "_")
        key = _CLASS_ALIASES.get(key, key)
        try:
            return cls(key)
        except ValueError:
            logger.warning("unrecognized road user class %r, using 'unknown'", raw)
            return cls.UNKNOWN


_CLASS_ALIASES = {
    "truck": "truck_bus", "bus": "truck_bus", "trucks_bus": "truck_bus",
    "motorbike": "motorcycle", "bike": "bicycle", "cyclist": "bicycle",
    "ped": "pedestrian",
}


def wrap_angle(a):
    """Wrap angles into (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    w = np.where(w <= -math.pi, w + 2.0 * math.pi, w)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class TrackState:
    frame: int
    t: float
    x: float
    y: float
    heading: float
    speed: float
    vx: float
    vy: float
    accel_lon: float
    accel_lat: float
    yaw_rate: float
    sideslip: float


_STATE_ARRAYS = ("frames", "t", "x", "y", "heading", "vx", "vy", "speed", "ax", "ay",
                 "accel_lon", "accel_lat", "yaw_rate", "sideslip")


@dataclass(frozen=True, eq=False)
class Track:
    """One road user. State columns are stored as read-only numpy arrays."""

    track_id: int
    road_class: RoadUserClass
    width: float
    length: float
    frames: np.ndarray
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    speed: np.ndarray = None
    ax: np.ndarray = None
    ay: np.ndarray = None
    accel_lon: np.ndarray = None
    accel_lat: np.ndarray = None
    yaw_rate: np.ndarray = None
    sideslip: np.ndarray = None

    def __post_init__(self):
        n = len(self.frames)
        if n == 0:
            raise DatasetError(f"track {self.track_id} has no states")
        nan = np.full(n, np.nan)
        for name in _STATE_ARRAYS:
            arr = getattr(self, name)
            arr = nan.copy() if arr is None else np.array(arr, dtype=np.int64 if name == "frames" else float)
            if arr.shape != (n,):
                raise DatasetError(f"track {self.track_id}: column {name} has wrong length")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(np.diff(self.frames) <= 0):
            raise NonContiguousFrames(self.track_id, "(not strictly increasing)")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def is_vru(self) -> bool:
        return self.road_class.is_vru

    @property
    def footprint_radius(self) -> float | None:
        return VRU_RADIUS if self.is_vru else None

    @property
    def positions(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    @property
    def half_length(self) -> float:
        """Half extent along the direction of travel; VRUs count as points."""
        return 0.0 if self.is_vru else 0.5 * self.length

    def index_of(self, frame: int) -> int:
        i = int(frame) - int(self.frames[0])
        if i < 0 or i >= len(self.frames) or self.frames[i] != frame:
            raise KeyError(f"frame {frame} not in track {self.track_id}")
        return i

    def state(self, i: int) -> TrackState:
        return TrackState(
            frame=int(self.frames[i]), t=float(self.t[i]), x=float(self.x[i]), y=float(self.y[i]),
            heading=float(self.heading[i]), speed=float(self.speed[i]), vx=float(self.vx[i]),
            vy=float(self.vy[i]), accel_lon=float(self.accel_lon[i]),
            accel_lat=float(self.accel_lat[i]), yaw_rate=float(self.yaw_rate[i]),
            sideslip=float(self.sideslip[i]),
        )

    def states(self) -> list[TrackState]:
        return [self.state(i) for i in range(len(self))]


@dataclass(frozen=True, eq=False)
class Recording:
    recording_id: str
    frame_rate: float
    tracks: list[Track]
    location_id: str = ""
    duration: float = 0.0
    _by_id: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.frame_rate > 0:
            raise DatasetError(f"frame rate must be positive, got {self.frame_rate}")
        by_id = {tr.track_id: tr for tr in self.tracks}
        if len(by_id) != len(self.tracks):
            raise DatasetError("duplicate track ids")
        object.__setattr__(self, "_by_id", by_id)

    def track(self, track_id: int) -> Track:
        return self._by_id[track_id]

    @property
    def frame_span(self) -> tuple[int, int]:
        if not self.tracks:
            return (0, -1)
        return (min(int(t.frames[0]) for t in self.tracks), max(int(t.frames[-1]) for t in self.tracks))


def derive_kinematics(track: Track, frame_rate: float) -> Track:
    """Fill speed, yaw rate, sideslip and body-frame accelerations.

    Interior frames use central differences, the first and last frame
    second-order one-sided differences. Accelerations from the file (ax, ay)
    are kept when finite; otherwise they are differentiated from velocity.
    """
    dt = 1.0 / frame_rate
    vx, vy = track.vx, track.vy
    speed = np.hypot(vx, vy)
    psi = np.asarray(track.heading, dtype=float)

    if len(track) >= 3:
        yaw_rate = np.gradient(np.unwrap(psi), dt, edge_order=2)
        dvx = np.gradient(vx, dt, edge_order=2)
        dvy = np.gradient(vy, dt, edge_order=2)
    elif len(track) == 2:
        yaw_rate = np.gradient(np.unwrap(psi), dt)
        dvx, dvy = np.gradient(vx, dt), np.gradient(vy, dt)
    else:
        yaw_rate = np.zeros(1)
        dvx = dvy = np.zeros(1)

    ax = np.where(np.isfinite(track.ax), track.ax, dvx)
    ay = np.where(np.isfinite(track.ay), track.ay, dvy)
    c, s = np.cos(psi), np.sin(psi)
    accel_lon = ax * c + ay * s
    accel_lat = -ax * s + ay * c

    moving = speed > STANDING_SPEED
    sideslip = np.where(moving, wrap_angle(np.arctan2(vy, vx) - psi), 0.0)

    return replace(track, speed=speed, ax=ax, ay=ay, accel_lon=accel_lon, accel_lat=accel_lat,
                   yaw_rate=yaw_rate, sideslip=sideslip)


def _read_csv(path: Path, required: tuple[str, ...]) -> pd.DataFrame:
    df = pd.read_csv(path)
    df.columns = [c.strip() for c in df.columns]
    for col in required:
        if col not in df.columns:
            raise MissingColumn(col, path)
    return df


def _numeric(df: pd.DataFrame, cols, path) -> pd.DataFrame:
    out = {}
    for col in cols:
        conv = pd.to_numeric(df[col], errors="coerce")
        bad = conv.isna() & df[col].notna()
        if bad.any():
            raise UnitParse(int(np.flatnonzero(bad.to_numpy())[0]) + 2, path, col)  # +2: header, 1-based
        out[col] = conv.to_numpy(dtype=float)
    return pd.DataFrame(out, index=df.index)


def load_recording(tracks_path, tracks_meta_path, recording_meta_path) -> Recording:
    """Load one recording from its three CSV files."""
    tracks_path, tracks_meta_path, recording_meta_path = map(
        Path, (tracks_path, tracks_meta_path, recording_meta_path))

    rec_df = _read_csv(recording_meta_path, RECORDING_META_COLUMNS)
    if rec_df.empty:
        raise DatasetError(f"{recording_meta_path}: no recording row")
    rec_num = _numeric(rec_df, ("frameRate", "duration"), recording_meta_path)
    frame_rate = float(rec_num["frameRate"].iloc[0])
    duration = float(rec_num["duration"].iloc[0])
    recording_id = str(rec_df["recordingId"].iloc[0])
    location_id = str(rec_df["locationId"].iloc[0])

    meta = _read_csv(tracks_meta_path, TRACK_META_COLUMNS)
    meta_num = _numeric(meta, ("trackId", "width", "length"), tracks_meta_path)
    meta_by_id = {
        int(tid): (float(w), float(le), RoadUserClass.parse(cls))
        for tid, w, le, cls in zip(meta_num["trackId"], meta_num["width"], meta_num["length"],
                                   meta["class"])
    }

    raw = _read_csv(tracks_path, TRACK_COLUMNS)
    num_cols = [c for c in TRACK_COLUMNS if c != "recordingId"]
    df = _numeric(raw, num_cols, tracks_path)
    for col in ("trackId", "frame", "xCenter", "yCenter", "heading", "xVelocity", "yVelocity"):
        missing = df[col].isna().to_numpy()
        if missing.any():
            raise UnitParse(int(np.flatnonzero(missing)[0]) + 2, tracks_path, col)
    df = df.sort_values(["trackId", "frame"], kind="stable")

    tracks = []
    for tid, g in df.groupby("trackId", sort=True):
        tid = int(tid)
        frames = g["frame"].to_numpy().astype(np.int64)
        if np.any(np.diff(frames) != 1):
            raise NonContiguousFrames(tid)
        if tid in meta_by_id:
            width, length, cls = meta_by_id[tid]
        else:
            logger.warning("track %d missing from tracksMeta, class unknown", tid)
            width, length, cls = float(g["width"].iloc[0]), float(g["length"].iloc[0]), RoadUserClass.UNKNOWN
        track = Track(
            track_id=tid, road_class=cls, width=width, length=length, frames=frames,
            t=frames / frame_rate, x=g["xCenter"].to_numpy(), y=g["yCenter"].to_numpy(),
            heading=wrap_angle(np.deg2rad(g["heading"].to_numpy())),
            vx=g["xVelocity"].to_numpy(), vy=g["yVelocity"].to_numpy(),
            ax=g["xAcceleration"].to_numpy(), ay=g["yAcceleration"].to_numpy(),
        )
        tracks.append(derive_kinematics(track, frame_rate))

    return Recording(recording_id=recording_id, frame_rate=frame_rate, tracks=tracks,
                     location_id=location_id, duration=duration)


def write_recording(recording: Recording, out_dir, prefix: str | None = None) -> tuple[Path, Path, Path]:
    """Write a recording as an inD-style CSV triple; returns the three paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = prefix if prefix is not None else f"{recording.recording_id}_"
    paths = (out_dir / f"{prefix}tracks.csv", out_dir / f"{prefix}tracksMeta.csv",
             out_dir / f"{prefix}recordingMeta.csv")

    rows = []
    for tr in recording.tracks:
        n = len(tr)
        rows.append(pd.DataFrame({
            "recordingId": recording.recording_id, "trackId": tr.track_id, "frame": tr.frames,
            "xCenter": tr.x, "yCenter": tr.y, "heading": np.rad2deg(tr.heading),
            "width": np.full(n, tr.width), "length": np.full(n, tr.length),
            "xVelocity": tr.vx, "yVelocity": tr.vy, "xAcceleration": tr.ax, "yAcceleration": tr.ay,
        }))
    tracks_df = pd.concat(rows, ignore_index=True) if rows else pd.DataFrame(columns=TRACK_COLUMNS)
    tracks_df.to_csv(paths[0], index=False, float_format="%.17g")

    pd.DataFrame({
        "recordingId": [recording.recording_id] * len(recording.tracks),
        "trackId": [tr.track_id for tr in recording.tracks],
        "initialFrame": [int(tr.frames[0]) for tr in recording.tracks],
        "finalFrame": [int(tr.frames[-1]) for tr in recording.tracks],
        "numFrames": [len(tr) for tr in recording.tracks],
        "width": [tr.width for tr in recording.tracks],
        "length": [tr.length for tr in recording.tracks],
        "class": [tr.road_class.value for tr in recording.tracks],
    }).to_csv(paths[1], index=False, float_format="%.17g")

    pd.DataFrame({
        "recordingId": [recording.recording_id], "locationId": [recording.location_id],
        "frameRate": [recording.frame_rate], "duration": [recording.duration],
    }).to_csv(paths[2], index=False, float_format="%.17g")
    return paths
