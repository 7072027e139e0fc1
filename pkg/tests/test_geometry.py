import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from shapely.geometry import Point, Polygon

from trajscore.geometry import (conflict_points, discrete_frechet, dims_template, frechet_matrix, key_to_cells,
                                cell_keys, resample_path, resample_polyline, state_arclength, swept_raster)
from trajscore.semantic_map import rectangle
from trajscore.synthetic import polyline_track, straight_track

from oracles import frechet_recursive


def test_resample_spacing():
    tr = polyline_track(0, [[0, 0], [30, 0], [30, 20]], np.full(300, 5.0))
    path = resample_path(tr, 0.5)
    steps = np.linalg.norm(np.diff(path.points, axis=0), axis=1)
    assert np.all(steps <= 0.5 + 1e-9)
    assert path.length == pytest.approx(state_arclength(tr)[-1], abs=1e-9)
    assert np.all(np.diff(path.cumulative_s) > 0)


def test_stationary_path():
    tr = straight_track(0, (3, 4), 0.0, 0.0, 20)
    path = resample_path(tr)
    assert len(path) == 1 and path.length == 0


def test_resample_polyline_endpoints():
    out = resample_polyline([[0, 0], [10, 0], [10, 3.3]], 1.0)
    np.testing.assert_allclose(out[0], [0, 0])
    np.testing.assert_allclose(out[-1], [10, 3.3])


def test_cell_keys_roundtrip():
    ix = np.array([-5, 0, 7, 123456])
    iy = np.array([3, -9, 0, -654321])
    bx, by = key_to_cells(cell_keys(ix, iy))
    np.testing.assert_array_equal(bx, ix)
    np.testing.assert_array_equal(by, iy)


def test_swept_raster_matches_point_in_polygon():
    tr = polyline_track(0, [[0, 0], [12, 0], [18, 6]], np.full(120, 6.0))
    path = resample_path(tr, 0.5)
    tmpl = dims_template(4.5, 1.8)
    ras = swept_raster(path, tmpl, 0.5)
    ours = set(zip(*[a.tolist() for a in key_to_cells(ras.keys)]))
    # brute force: union of footprints at every path sample, cell centres tested with shapely
    union = None
    for p, h in zip(path.points, path.headings):
        poly = Polygon(rectangle(p[0], p[1], h, 4.5, 1.8)).buffer(1e-9)
        union = poly if union is None else union.union(poly)
    x0, y0, x1, y1 = union.bounds
    ref = set()
    for ix in range(int(math.floor(x0 / 0.5)) - 1, int(math.ceil(x1 / 0.5)) + 1):
        for iy in range(int(math.floor(y0 / 0.5)) - 1, int(math.ceil(y1 / 0.5)) + 1):
            if union.contains(Point((ix + 0.5) * 0.5, (iy + 0.5) * 0.5)):
                ref.add((ix, iy))
    assert ours == ref


def test_conflict_points_perpendicular():
    a = resample_path(straight_track(0, (-10, 0), 0.0, 10, 30))
    b = resample_path(straight_track(1, (0, -10), math.pi / 2, 10, 30))
    cps = conflict_points(a, dims_template(4.5, 1.8), b, dims_template(4.5, 1.8))
    # shared area is the 1.8 x 1.8 square around the crossing -> cell centres within +-0.9
    assert np.all(np.abs(cps.centers) < 0.9 + 1e-9)
    assert len(cps) == 16


pts = st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)), min_size=1, max_size=10)


@given(pts, pts)
def test_frechet_matches_recursive(a, b):
    assert discrete_frechet(np.array(a), np.array(b)) == frechet_recursive(a, b)


@given(pts, pts)
def test_frechet_symmetric_and_bounded(a, b):
    a, b = np.array(a), np.array(b)
    d = discrete_frechet(a, b)
    assert d == discrete_frechet(b, a)
    assert d >= max(np.linalg.norm(a[0] - b[0]), np.linalg.norm(a[-1] - b[-1])) - 1e-12
    assert discrete_frechet(a, a) == 0


def test_frechet_matrix():
    seqs = [np.random.default_rng(i).normal(size=(5 + i, 2)) for i in range(4)]
    m = frechet_matrix(seqs)
    for i in range(4):
        for j in range(4):
            assert m[i, j] == (0 if i == j else discrete_frechet(seqs[i], seqs[j]))
