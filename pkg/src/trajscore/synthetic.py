"""Synthetic recordings: track builders and a four-arm intersection generator.

The generator produces a semantic map plus through/turning vehicles,
pedestrians on the walkways and a few planted rule violations. It is used by
the tests, the scale benchmark and the `synth` CLI command.
"""

from __future__ import annotations

import math

import numpy as np

from .dataset_io import Recording, RoadUserClass, Track, derive_kinematics, wrap_angle
from .semantic_map import Region, RegionType, SemanticMap

DEFAULT_DIMS = {
    RoadUserClass.CAR: (4.5, 1.8),
    RoadUserClass.TRUCK_BUS: (10.0, 2.5),
    RoadUserClass.VAN: (5.5, 2.0),
    RoadUserClass.MOTORCYCLE: (2.2, 0.8),
    RoadUserClass.BICYCLE: (1.8, 0.6),
    RoadUserClass.PEDESTRIAN: (0.5, 0.5),
    RoadUserClass.UNKNOWN: (4.5, 1.8),
}


def track_from_xy(track_id: int, x, y, frame_rate: float = 25.0, start_frame: int = 0,
                  road_class: RoadUserClass = RoadUserClass.CAR, length: float | None = None,
                  width: float | None = None, heading=None) -> Track:
    """Build a track from positions; velocity is differentiated, heading follows motion."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    n = len(x)
    dl, dw = DEFAULT_DIMS[road_class]
    if n >= 3:
        vx, vy = np.gradient(x, 1 / frame_rate, edge_order=2), np.gradient(y, 1 / frame_rate, edge_order=2)
    elif n == 2:
        vx, vy = np.gradient(x, 1 / frame_rate), np.gradient(y, 1 / frame_rate)
    else:
        vx = vy = np.zeros(n)
    if heading is None:
        heading = np.arctan2(vy, vx)
        moving = np.hypot(vx, vy) > 0.1
        # hold the last moving heading while standing
        idx = np.where(moving, np.arange(n), -1)
        idx = np.maximum.accumulate(idx)
        first = int(np.argmax(moving)) if moving.any() else 0
        idx = np.where(idx < 0, first, idx)
        heading = heading[idx] if moving.any() else np.zeros(n)
    heading = wrap_angle(np.broadcast_to(np.asarray(heading, dtype=float), (n,)))
    frames = start_frame + np.arange(n)
    tr = Track(track_id=track_id, road_class=road_class, width=dw if width is None else width,
               length=dl if length is None else length, frames=frames, t=frames / frame_rate,
               x=x, y=y, heading=heading, vx=vx, vy=vy)
    return derive_kinematics(tr, frame_rate)


def straight_track(track_id: int, start, heading: float, speed: float, n_frames: int,
                   frame_rate: float = 25.0, start_frame: int = 0, **kw) -> Track:
    """Constant-velocity track along `heading` from `start`."""
    t = np.arange(n_frames) / frame_rate
    x = start[0] + speed * t * math.cos(heading)
    y = start[1] + speed * t * math.sin(heading)
    return track_from_xy(track_id, x, y, frame_rate, start_frame, heading=heading, **kw)


def polyline_track(track_id: int, waypoints, speeds, frame_rate: float = 25.0, start_frame: int = 0,
                   **kw) -> Track:
    """Track moving along `waypoints` with per-frame speeds `speeds` (m/s)."""
    wp = np.asarray(waypoints, dtype=float)
    seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    s_wp = np.concatenate([[0.0], np.cumsum(seg)])
    speeds = np.asarray(speeds, dtype=float)
    s = np.concatenate([[0.0], np.cumsum(speeds[:-1] / frame_rate)])
    s = np.minimum(s, s_wp[-1])
    x, y = np.interp(s, s_wp, wp[:, 0]), np.interp(s, s_wp, wp[:, 1])
    return track_from_xy(track_id, x, y, frame_rate, start_frame, **kw)


# -- four-arm intersection -------------------------------------------------

LANE = 3.5
WALK = 2.5


def _rot(points, theta):
    c, s = math.cos(theta), math.sin(theta)
    p = np.asarray(points, dtype=float)
    return np.column_stack([p[:, 0] * c - p[:, 1] * s, p[:, 0] * s + p[:, 1] * c])


ARMS = {"e": 0.0, "n": math.pi / 2, "w": math.pi, "s": -math.pi / 2}


def intersection_map(arm_length: float = 60.0, speed_limit: float = 50 / 3.6) -> SemanticMap:
    """Two-lane cross intersection centred at the origin, right-hand traffic."""
    L, c = arm_length, LANE
    regions = [Region("center", RegionType.STREET, [[-c, -c], [c, -c], [c, c], [-c, c]], speed_limit)]
    for name, th in ARMS.items():
        out_lane = _rot([[c, -c], [L, -c], [L, 0], [c, 0]], th)
        in_lane = _rot([[c, 0], [L, 0], [L, c], [c, c]], th)
        regions.append(Region(f"{name}_out", RegionType.STREET, out_lane, speed_limit,
                              _rot([[c, -c / 2], [L, -c / 2]], th)))
        regions.append(Region(f"{name}_in", RegionType.STREET, in_lane, speed_limit,
                              _rot([[L, c / 2], [c, c / 2]], th)))
        regions.append(Region(f"{name}_walk_l", RegionType.WALKWAY,
                              _rot([[c, c], [L, c], [L, c + WALK], [c, c + WALK]], th)))
        regions.append(Region(f"{name}_walk_r", RegionType.WALKWAY,
                              _rot([[c, -c - WALK], [L, -c - WALK], [L, -c], [c, -c]], th)))
        regions.append(Region(f"{name}_grass", RegionType.GRASS,
                              _rot([[c + WALK, c + WALK], [L, c + WALK], [L, L], [c + WALK, L]], th)))
    return SemanticMap("synthetic-intersection", regions)


def _route(entry: str, exit_: str, arm_length: float) -> np.ndarray:
    """Centre-line waypoints from the far end of `entry` to the far end of `exit_`."""
    L, h = arm_length, LANE / 2
    start = _rot([[L, h]], ARMS[entry])[0]
    end = _rot([[L, -h]], ARMS[exit_])[0]
    d_in = -np.array([math.cos(ARMS[entry]), math.sin(ARMS[entry])])
    d_out = np.array([math.cos(ARMS[exit_]), math.sin(ARMS[exit_])])
    # corner where the inbound and outbound lane centre lines meet
    A = np.column_stack([d_in, -d_out])
    if abs(np.linalg.det(A)) < 1e-9:
        return np.vstack([start, end])
    t = np.linalg.solve(A, end - start)[0]
    corner = start + t * d_in
    r = 8.0
    p0, p2 = corner - r * d_in, corner + r * d_out
    u = np.linspace(0, 1, 24)[:, None]
    arc = (1 - u) ** 2 * p0 + 2 * (1 - u) * u * corner + u ** 2 * p2
    return np.vstack([start, arc, end])


def _speed_profile(route: np.ndarray, cruise: float, frame_rate: float, stop_at: float | None,
                   wait: float, rng) -> np.ndarray:
    """Per-frame speeds with curve slow-down and an optional stop at arc length `stop_at`."""
    seg = np.linalg.norm(np.diff(route, axis=0), axis=1)
    s_wp = np.concatenate([[0.0], np.cumsum(seg)])
    total = s_wp[-1]
    head = np.arctan2(np.diff(route[:, 1]), np.diff(route[:, 0]))
    turn = np.abs(wrap_angle(np.diff(head)))
    curve_s = s_wp[1:-1][turn > 1e-3]
    v_curve = min(cruise, 6.0)
    decel = 2.0
    dt = 1.0 / frame_rate
    s, v, waited, out = 0.0, cruise, 0.0, []
    while s < total:
        target = cruise
        if len(curve_s):
            ahead = curve_s[curve_s >= s - 1.0]
            if len(ahead):
                gap = max(ahead[0] - s, 0.0)
                target = min(target, math.sqrt(v_curve ** 2 + 2 * decel * gap))
        if stop_at is not None and waited < wait:
            gap = stop_at - s
            if gap <= 0.05:
                target = 0.0
                v = 0.0
                waited += dt
            else:
                target = min(target, math.sqrt(2 * decel * gap))
        v = min(target, v + 1.5 * dt) if target >= v else max(target, v - decel * dt * 1.5)
        out.append(v)
        s += v * dt
        if len(out) > 10_000_000:
            break
    return np.asarray(out)


def synthetic_intersection(n_tracks: int = 100, duration: float = 120.0, frame_rate: float = 25.0,
                           seed: int = 0, arm_length: float = 60.0, pedestrian_share: float = 0.15,
                           stop_share: float = 0.3, n_wrong_way: int = 1, n_walkway: int = 1,
                           recording_id: str = "synthetic") -> tuple[Recording, SemanticMap]:
    """Random traffic through `intersection_map`; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    smap = intersection_map(arm_length)
    n_frames = int(round(duration * frame_rate))
    arms = list(ARMS)
    tracks = []
    tid = 0
    while len(tracks) < n_tracks:
        kind = "ped" if rng.random() < pedestrian_share else "car"
        if len(tracks) < n_wrong_way:
            kind = "wrong_way"
        elif len(tracks) < n_wrong_way + n_walkway:
            kind = "walkway_car"
        if kind == "ped":
            arm = arms[rng.integers(4)]
            side = 1 if rng.random() < 0.5 else -1
            off = side * (LANE + WALK / 2)
            a, b = LANE + 1.0, arm_length - 1.0
            if rng.random() < 0.5:
                a, b = b, a
            route = _rot([[a, off], [b, off]], ARMS[arm])
            speeds = np.full(int(abs(b - a) / 1.3 * frame_rate), rng.uniform(1.0, 1.6))
            road_class = RoadUserClass.PEDESTRIAN
        else:
            entry = arms[rng.integers(4)]
            exit_ = arms[(arms.index(entry) + rng.integers(1, 4)) % 4]
            route = _route(entry, exit_, arm_length)
            cruise = rng.uniform(8.0, 12.0)
            stop = None
            if kind == "car" and rng.random() < stop_share:
                stop = arm_length - LANE - 3.0
            if kind == "wrong_way":
                route = route[::-1].copy()
            if kind == "walkway_car":
                off = LANE + WALK / 2
                route = _rot([[arm_length, off], [LANE + 2, off]], ARMS[entry])
                cruise = 5.0
            speeds = _speed_profile(route, cruise, frame_rate, stop, rng.uniform(2.0, 8.0), rng)
            road_class = RoadUserClass.CAR if rng.random() < 0.9 else RoadUserClass.TRUCK_BUS
        n = len(speeds)
        if n < 3 or n >= n_frames:
            continue
        start = int(rng.integers(0, n_frames - n))
        tracks.append(polyline_track(tid, route, speeds, frame_rate, start, road_class=road_class))
        tid += 1
    rec = Recording(recording_id, frame_rate, tracks, location_id=smap.location_id, duration=duration)
    return rec, smap
