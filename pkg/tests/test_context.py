import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajscore.config import Config
from trajscore.dataset_io import Recording, RoadUserClass, TrackState
from trajscore.context import (behavior_clustering, behavior_distance, behavior_min_samples, behavior_table,
                               check_area_usage, check_driving_direction, detect_context, region_episodes,
                               trajectory_clustering, trajectory_min_cluster_size, trajectory_table)
from trajscore.semantic_map import Region, RegionType, SemanticMap, membership_table
from trajscore.synthetic import straight_track

from conftest import square

STREET = Region("s", RegionType.STREET, square(0, 0, 10, 10), 50 / 3.6, [[0, 5], [10, 5]])
WALK = Region("w", RegionType.WALKWAY, square(0, 10, 10, 12))
GRASS = Region("g", RegionType.GRASS, square(0, 12, 10, 20))


def st_(heading=0.0, speed=5.0, x=5.0, y=5.0):
    return TrackState(frame=7, t=0.0, x=x, y=y, heading=heading, speed=speed, vx=0, vy=0,
                      accel_lon=0, accel_lat=0, yaw_rate=0, sideslip=0)


def test_area_usage_rules():
    assert check_area_usage(st_(), [STREET], RoadUserClass.CAR) is None
    assert check_area_usage(st_(), [WALK], RoadUserClass.CAR) is not None
    # allowed in one of the assigned regions is enough
    assert check_area_usage(st_(), [WALK, STREET], RoadUserClass.CAR) is None
    assert check_area_usage(st_(), [GRASS], RoadUserClass.PEDESTRIAN) is not None
    assert check_area_usage(st_(), [], RoadUserClass.PEDESTRIAN) is not None


def test_driving_direction_rules():
    assert check_driving_direction(st_(0.0), [STREET], RoadUserClass.CAR) is None
    assert check_driving_direction(st_(math.pi), [STREET], RoadUserClass.CAR) is not None
    assert check_driving_direction(st_(math.radians(89)), [STREET], RoadUserClass.CAR) is None
    assert check_driving_direction(st_(math.radians(91)), [STREET], RoadUserClass.CAR) is not None
    assert check_driving_direction(st_(math.pi, speed=0.8), [STREET], RoadUserClass.CAR) is None
    assert check_driving_direction(st_(math.pi), [STREET], RoadUserClass.BICYCLE) is None
    assert check_driving_direction(st_(math.pi), [WALK], RoadUserClass.CAR) is None


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi), st.floats(0, 30), st.floats(0, 30))
def test_behavior_distance_properties(a, b, v1, v2):
    d = behavior_distance(a, v1, b, v2)
    assert d == pytest.approx(behavior_distance(b, v2, a, v1))
    assert d >= 0
    assert behavior_distance(a, v1, a, v1) == 0
    assert d <= math.hypot(math.pi, 1.0) + 1e-9


def test_min_samples_rounding():
    assert behavior_min_samples(100) == 3
    assert behavior_min_samples(50) == 3  # 2.5 rounds up
    assert behavior_min_samples(0) == 2
    assert trajectory_min_cluster_size(200) == 2
    assert trajectory_min_cluster_size(300) == 3  # 2.5 rounds up
    assert trajectory_min_cluster_size(1000) == 6


def test_behavior_reversed_point():
    rng = np.random.default_rng(0)
    psi = np.concatenate([rng.normal(0, 0.05, 100), [math.pi]])
    v = np.concatenate([rng.normal(10, 0.3, 100), [10.0]])
    mask, values, res = behavior_clustering(psi, v)
    assert np.flatnonzero(mask).tolist() == [100]
    ref = min(behavior_distance(math.pi, 10.0, psi[i], v[i]) for i in range(100))
    assert values[100] == pytest.approx(ref)
    assert values[100] > 0.7


@settings(max_examples=25)
@given(st.integers(1, 20))
def test_behavior_duplicates_do_not_flag(k):
    """Adding copies of an inlier never turns other inliers into outliers."""
    rng = np.random.default_rng(1)
    psi, v = rng.normal(0, 0.05, 60), rng.normal(10, 0.3, 60)
    base, _, _ = behavior_clustering(psi, v)
    more, _, _ = behavior_clustering(np.concatenate([psi, np.full(k, psi[0])]),
                                     np.concatenate([v, np.full(k, v[0])]))
    assert not more[:60][~base].any()


def _seg(y, n=30):
    return np.column_stack([np.linspace(0, 29, n), np.full(n, y)])


def test_trajectory_outlier():
    """Flagged segments equal the reference HDBSCAN noise; the crossing segment is the strongest."""
    from sklearn.cluster import HDBSCAN
    from trajscore.geometry import discrete_frechet

    rng = np.random.default_rng(3)
    segs = [_seg(y) for y in rng.normal(0, 0.3, 30)]
    segs.append(np.column_stack([np.full(30, 15.0), np.linspace(-14, 15, 30)]))
    mask, values, res = trajectory_clustering(segs)
    n = len(segs)
    D = np.array([[discrete_frechet(a, b) for b in segs] for a in segs])
    ref = HDBSCAN(min_cluster_size=trajectory_min_cluster_size(n), metric="precomputed").fit(D).labels_
    assert np.array_equal(mask, ref == -1)
    assert mask[30] and int(np.argmax(values)) == 30
    clustered = res.labels >= 0
    assert values[30] == pytest.approx(D[30, clustered].min())


def test_trajectory_identical_segments():
    mask, values, _ = trajectory_clustering([_seg(0.0) for _ in range(10)])
    assert not mask.any()


def test_region_episodes_split_on_reentry():
    import pandas as pd
    memb = pd.DataFrame({"track": [1] * 6, "frame": range(6), "idx": range(6),
                         "region": [0, 0, 1, 1, 0, 0], "fraction": 1.0})
    ep = region_episodes(memb)
    assert ep[["region", "lo", "hi"]].values.tolist() == [[0, 0, 1], [0, 4, 5], [1, 2, 3]]


def test_context_tables(street_map):
    fps = 25.0
    tracks = [
        straight_track(0, (-100, 0.0), 0.0, 10.0, 100, fps),  # fine
        straight_track(1, (100, 0.0), math.pi, 10.0, 100, fps),  # wrong way
        straight_track(2, (-100, 6.0), 0.0, 5.0, 100, fps),  # car on walkway
        straight_track(3, (-100, 2.0), 0.0, 20.0, 100, fps),  # speeding
        straight_track(4, (-100, 30.0), 0.0, 5.0, 10, fps),  # off map
    ]
    rec = Recording("ctx", fps, tracks)
    memb = membership_table(rec.tracks, street_map)
    det = detect_context(rec, street_map, memb, Config())
    counts = det.groupby(["type", "subject"]).size()
    assert counts[("driving_direction", 1)] == 100
    assert counts[("area_usage", 2)] == 100
    assert counts[("velocity", 3)] == 100
    assert counts[("area_usage", 4)] == 10
    assert not ((det["subject"] == 0) & det["type"].isin(["area_usage", "driving_direction", "velocity"])).any()


def test_behavior_table_spans(street_map):
    fps = 25.0
    tracks = [straight_track(i, (-100, -2.0 + 0.1 * i), 0.0, 10.0, 100, fps) for i in range(20)]
    tracks.append(straight_track(20, (100, -2.0), math.pi, 10.0, 60, fps))
    rec = Recording("b", fps, tracks)
    det = behavior_table(rec, membership_table(rec.tracks, street_map), Config())
    assert set(det["subject"]) == {20}
    assert det["start"].tolist() == [0, 25, 50]
    assert det["end"].tolist() == [24, 49, 59]
