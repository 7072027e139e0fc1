"""Region-decomposed road infrastructure and road-user-to-region assignment."""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import _kernels
from .dataset_io import VRU_RADIUS, RoadUserClass, Track

logger = logging.getLogger(__name__)

MIN_OVERLAP_AREA = 2.0  # m^2
MIN_REGION_SHARE = 0.5
CIRCLE_SIDES = 16
# equal-area regular polygon for the VRU circle
_CIRCLE_SCALE = math.sqrt(math.pi / (0.5 * CIRCLE_SIDES * math.sin(2 * math.pi / CIRCLE_SIDES)))


class MapError(Exception):
    pass


class SelfIntersectingPolygon(MapError):
    def __init__(self, region_id: str):
        self.region_id = region_id
        super().__init__(f"region {region_id!r}: polygon is self-intersecting or degenerate")


class UnknownRegionType(MapError):
    def __init__(self, region_id: str, type_name: str = ""):
        self.region_id = region_id
        super().__init__(f"region {region_id!r}: unknown region type {type_name!r}")


_MOTORIZED = frozenset(c for c in RoadUserClass if c.is_motorized)


class RegionType(enum.Enum):
    STREET = "street"
    WALKWAY = "walkway"
    PARKING = "parking"
    GRASS = "grass"
    BICYCLE_LANE = "bicycle_lane"

    @property
    def allowed_classes(self) -> frozenset:
        return _ALLOWED[self]

    def allows(self, road_class: RoadUserClass) -> bool:
        return road_class in _ALLOWED[self]


_ALLOWED = {
    RegionType.STREET: _MOTORIZED | {RoadUserClass.BICYCLE},
    RegionType.WALKWAY: frozenset({RoadUserClass.PEDESTRIAN}),
    RegionType.PARKING: _MOTORIZED,
    RegionType.GRASS: frozenset(),
    RegionType.BICYCLE_LANE: frozenset({RoadUserClass.BICYCLE}),
}


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) < 1e-12 else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return (min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12
                and min(a[1], b[1]) - 1e-12 <= c[1] <= max(a[1], b[1]) + 1e-12)

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_seg(p1, p2, q1)) or (o2 == 0 and on_seg(p1, p2, q2))
            or (o3 == 0 and on_seg(q1, q2, p1)) or (o4 == 0 and on_seg(q1, q2, p2)))


def is_simple(poly: np.ndarray) -> bool:
    n = len(poly)
    if n < 3:
        return False
    for i in range(n):
        a1, a2 = poly[i], poly[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_cross(a1, a2, poly[j], poly[(j + 1) % n]):
                return False
    return True


def normalize_ring(points) -> np.ndarray:
    """Drop the closing vertex and consecutive duplicates; orient counter-clockwise."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    keep = [0]
    for i in range(1, len(pts)):
        if not np.allclose(pts[i], pts[keep[-1]]):
            keep.append(i)
    pts = pts[keep]
    if len(pts) > 1 and np.allclose(pts[0], pts[-1]):
        pts = pts[:-1]
    if len(pts) >= 3 and _kernels.polygon_area(pts) < 0:
        pts = pts[::-1].copy()
    return np.ascontiguousarray(pts)


def point_segment_distance(points: np.ndarray, polyline: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distance from each point to a polyline, and the index of the nearest segment."""
    points = np.atleast_2d(points)
    if len(polyline) == 1:
        return np.linalg.norm(points - polyline[0], axis=1), np.zeros(len(points), dtype=int)
    a = polyline[:-1]
    ab = polyline[1:] - a
    ab2 = np.maximum((ab ** 2).sum(axis=1), 1e-18)
    ap = points[:, None, :] - a[None, :, :]
    t = np.clip((ap * ab[None]).sum(axis=2) / ab2[None], 0.0, 1.0)
    proj = a[None] + t[..., None] * ab[None]
    d = np.linalg.norm(points[:, None, :] - proj, axis=2)
    seg = np.argmin(d, axis=1)
    return d[np.arange(len(points)), seg], seg


@dataclass(frozen=True, eq=False)
class Region:
    region_id: str
    type: RegionType
    polygon: np.ndarray
    speed_limit: float | None = None
    direction_ref: np.ndarray | None = None
    area: float = field(init=False)
    bbox: tuple[float, float, float, float] = field(init=False)

    def __post_init__(self):
        poly = normalize_ring(self.polygon)
        if len(poly) < 3 or not is_simple(poly):
            raise SelfIntersectingPolygon(self.region_id)
        area = abs(float(_kernels.polygon_area(poly)))
        if area <= 0:
            raise SelfIntersectingPolygon(self.region_id)
        poly.setflags(write=False)
        object.__setattr__(self, "polygon", poly)
        object.__setattr__(self, "area", area)
        object.__setattr__(self, "bbox", (float(poly[:, 0].min()), float(poly[:, 1].min()),
                                          float(poly[:, 0].max()), float(poly[:, 1].max())))
        if self.direction_ref is not None:
            ref = np.asarray(self.direction_ref, dtype=float).reshape(-1, 2)
            if len(ref) < 2:
                raise MapError(f"region {self.region_id!r}: direction_ref needs >= 2 points")
            object.__setattr__(self, "direction_ref", ref)
            edge_dist = point_segment_distance(ref, np.vstack([poly, poly[:1]]))[0]
            inside = np.array([_point_in_polygon(p, poly) for p in ref])
            if np.any(~inside & (edge_dist > 5.0)):
                logger.warning("region %s: direction_ref strays more than 5 m from polygon", self.region_id)

    def direction_at(self, points) -> np.ndarray:
        """Tangent angle of the direction reference at the nearest point."""
        if self.direction_ref is None:
            raise ValueError(f"region {self.region_id} has no direction reference")
        ref = self.direction_ref
        _, seg = point_segment_distance(np.atleast_2d(points), ref)
        d = ref[seg + 1] - ref[seg]
        return np.arctan2(d[:, 1], d[:, 0])


def _point_in_polygon(p, poly) -> bool:
    x, y = p
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xc > x:
                inside = not inside
    return inside


@dataclass(frozen=True, eq=False)
class SemanticMap:
    location_id: str
    regions: list[Region]
    bounds: tuple[float, float, float, float] = field(init=False)

    def __post_init__(self):
        ids = [r.region_id for r in self.regions]
        if len(set(ids)) != len(ids):
            raise MapError("region ids must be unique")
        if self.regions:
            bb = np.array([r.bbox for r in self.regions])
            bounds = (float(bb[:, 0].min()), float(bb[:, 1].min()), float(bb[:, 2].max()), float(bb[:, 3].max()))
        else:
            bounds = (0.0, 0.0, 0.0, 0.0)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "_index", {r.region_id: i for i, r in enumerate(self.regions)})

    def region(self, region_id: str) -> Region:
        return self.regions[self._index[region_id]]

    def index(self, region_id: str) -> int:
        return self._index[region_id]

    def to_dict(self) -> dict:
        out = []
        for r in self.regions:
            item = {"id": r.region_id, "type": r.type.value, "polygon": r.polygon.tolist()}
            if r.speed_limit is not None:
                item["speed_limit_mps"] = r.speed_limit
            if r.direction_ref is not None:
                item["direction_ref"] = r.direction_ref.tolist()
            out.append(item)
        return {"location_id": self.location_id, "regions": out}


def map_from_dict(data: dict) -> SemanticMap:
    regions = []
    for item in data.get("regions", []):
        rid = str(item["id"])
        try:
            rtype = RegionType(str(item.get("type", "")).strip().lower())
        except ValueError:
            raise UnknownRegionType(rid, item.get("type")) from None
        limit = item.get("speed_limit_mps")
        regions.append(Region(
            region_id=rid, type=rtype, polygon=item["polygon"],
            speed_limit=None if limit is None else float(limit),
            direction_ref=item.get("direction_ref"),
        ))
    return SemanticMap(location_id=str(data.get("location_id", "")), regions=regions)


def load_map(map_path) -> SemanticMap:
    with open(map_path) as fh:
        data = json.load(fh)
    return map_from_dict(data)


def save_map(smap: SemanticMap, path) -> None:
    Path(path).write_text(json.dumps(smap.to_dict(), indent=1))


def rectangle(cx, cy, heading, length, width) -> np.ndarray:
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([cx, cy])


def circle_polygon(cx, cy, radius=VRU_RADIUS) -> np.ndarray:
    ang = 2 * math.pi * np.arange(CIRCLE_SIDES) / CIRCLE_SIDES
    r = radius * _CIRCLE_SCALE
    return np.column_stack([cx + r * np.cos(ang), cy + r * np.sin(ang)])


def footprint(track: Track, frame: int) -> np.ndarray:
    """Convex CCW polygon covered by the road user at `frame`."""
    i = track.index_of(frame)
    if track.is_vru:
        return circle_polygon(track.x[i], track.y[i], track.footprint_radius)
    return rectangle(track.x[i], track.y[i], track.heading[i], track.length, track.width)


def footprint_template(track: Track) -> np.ndarray:
    """Footprint vertices in the body frame (heading 0, origin at center)."""
    if track.is_vru:
        return circle_polygon(0.0, 0.0, track.footprint_radius)
    return rectangle(0.0, 0.0, 0.0, track.length, track.width)


def place(template: np.ndarray, x, y, heading) -> np.ndarray:
    """Place a body-frame template at many poses -> (K, m, 2)."""
    x, y, heading = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (x, y, heading))
    c, s = np.cos(heading)[:, None], np.sin(heading)[:, None]
    px = template[None, :, 0] * c - template[None, :, 1] * s + x[:, None]
    py = template[None, :, 0] * s + template[None, :, 1] * c + y[:, None]
    return np.ascontiguousarray(np.stack([px, py], axis=2))


def track_footprints(track: Track) -> np.ndarray:
    heading = np.zeros(len(track)) if track.is_vru else track.heading
    return place(footprint_template(track), track.x, track.y, heading)


def overlap_area(region_polygon: np.ndarray, convex_footprint: np.ndarray) -> float:
    fp = np.ascontiguousarray(convex_footprint, dtype=float)
    if _kernels.polygon_area(fp) < 0:
        fp = fp[::-1].copy()
    return float(_kernels.clip_area(np.ascontiguousarray(region_polygon, dtype=float), fp))


@dataclass(frozen=True)
class RegionMember:
    region_id: str
    overlap_area: float
    fraction_of_footprint: float


def is_member(overlap: float, region_area: float) -> bool:
    return overlap >= MIN_OVERLAP_AREA or overlap / region_area > MIN_REGION_SHARE


def assign_regions(fp: np.ndarray, smap: SemanticMap) -> list[RegionMember]:
    """Regions the footprint belongs to; empty means off-map."""
    fp = np.ascontiguousarray(fp, dtype=float)
    if _kernels.polygon_area(fp) < 0:
        fp = fp[::-1].copy()
    fp_area = abs(float(_kernels.polygon_area(fp)))
    x0, y0, x1, y1 = fp[:, 0].min(), fp[:, 1].min(), fp[:, 0].max(), fp[:, 1].max()
    out = []
    for region in smap.regions:
        bx0, by0, bx1, by1 = region.bbox
        if bx1 < x0 or bx0 > x1 or by1 < y0 or by0 > y1:
            continue
        ov = float(_kernels.clip_area(region.polygon, fp))
        if ov > 0 and is_member(ov, region.area):
            out.append(RegionMember(region.region_id, ov, min(ov / fp_area, 1.0)))
    return out


@dataclass(frozen=True, eq=False)
class TrackAssignment:
    """Region memberships of one track, one row per (state index, region)."""

    track_id: int
    state_index: np.ndarray
    region_index: np.ndarray
    overlap: np.ndarray
    fraction: np.ndarray

    def members_at(self, i: int) -> list[tuple[int, float, float]]:
        sel = np.flatnonzero(self.state_index == i)
        return [(int(self.region_index[k]), float(self.overlap[k]), float(self.fraction[k])) for k in sel]


def assign_track(track: Track, smap: SemanticMap) -> TrackAssignment:
    fps = track_footprints(track)
    fp_area = abs(_kernels.polygon_area(fps[0]))
    x0, x1 = fps[:, :, 0].min(), fps[:, :, 0].max()
    y0, y1 = fps[:, :, 1].min(), fps[:, :, 1].max()
    s_idx, r_idx, ovs = [], [], []
    for ri, region in enumerate(smap.regions):
        bx0, by0, bx1, by1 = region.bbox
        if bx1 < x0 or bx0 > x1 or by1 < y0 or by0 > y1:
            continue
        areas = _kernels.clip_areas_batch(region.polygon, fps)
        hit = (areas > 0) & ((areas >= MIN_OVERLAP_AREA) | (areas / region.area > MIN_REGION_SHARE))
        idx = np.flatnonzero(hit)
        s_idx.append(idx)
        r_idx.append(np.full(len(idx), ri))
        ovs.append(areas[idx])
    if s_idx:
        s = np.concatenate(s_idx)
        r = np.concatenate(r_idx)
        o = np.concatenate(ovs)
        order = np.lexsort((r, s))
        s, r, o = s[order], r[order], o[order]
    else:
        s = r = np.zeros(0, dtype=int)
        o = np.zeros(0)
    return TrackAssignment(track.track_id, s.astype(np.int64), r.astype(np.int64), o,
                           np.minimum(o / fp_area, 1.0))


OFFMAP = "__offmap__"


def region_ids(smap: SemanticMap) -> list[str]:
    """Region labels indexed like membership rows; the last entry is the off-map pseudo region."""
    return [r.region_id for r in smap.regions] + [OFFMAP]


def membership_table(tracks, smap: SemanticMap) -> pd.DataFrame:
    """One row per (track, frame, region) membership.

    States without any region get a single row in the off-map pseudo region
    (index ``len(smap.regions)``) with fraction 1.
    """
    offmap = len(smap.regions)
    parts = []
    for tr in tracks:
        a = assign_track(tr, smap)
        n = len(tr)
        covered = np.zeros(n, dtype=bool)
        covered[a.state_index] = True
        miss = np.flatnonzero(~covered)
        idx = np.concatenate([a.state_index, miss])
        reg = np.concatenate([a.region_index, np.full(len(miss), offmap)])
        frac = np.concatenate([a.fraction, np.ones(len(miss))])
        order = np.lexsort((reg, idx))
        parts.append(pd.DataFrame({
            "track": np.full(len(idx), tr.track_id, dtype=np.int64), "frame": tr.frames[idx[order]],
            "idx": idx[order].astype(np.int64), "region": reg[order].astype(np.int64),
            "fraction": frac[order]}))
    if not parts:
        return pd.DataFrame({"track": [], "frame": [], "idx": [], "region": [], "fraction": []}).astype(
            {"track": np.int64, "frame": np.int64, "idx": np.int64, "region": np.int64})
    return pd.concat(parts, ignore_index=True)
