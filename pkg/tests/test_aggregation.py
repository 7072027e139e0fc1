import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from trajscore.aggregation import (anomaly_abstract, compare_table, heatmap, positive_variation, top_k)
from trajscore.dataset_io import Recording
from trajscore.pipeline import analyze_recording
from trajscore.semantic_map import Region, RegionType, SemanticMap
from trajscore.synthetic import straight_track

from conftest import car_line, square

series = st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=50)


def test_positive_variation_examples():
    assert positive_variation([2, 2, 2]) == 2
    assert positive_variation([0, 1, 3]) == 3
    assert positive_variation([0, 2, 0, 2]) == 4
    assert positive_variation([]) == 0


@given(series)
def test_positive_variation_oracle(s):
    ref = s[0] + sum(max(b - a, 0.0) for a, b in zip(s, s[1:]))
    assert positive_variation(s) == pytest.approx(ref)
    assert positive_variation(s) >= max(s[-1] - s[0], 0.0) - 1e-9
    assert positive_variation(s) >= s[-1] - 1e-9


@given(series)
def test_positive_variation_monotone_from_zero(s):
    s = sorted(s)
    assert positive_variation([0.0] + s) == pytest.approx(s[-1])


def groups_frame(rows):
    return pd.DataFrame(rows, columns=["region", "track", "type", "weighted"])


def test_anomaly_abstract_examples():
    from trajscore.aggregation import anomaly_groups
    det = pd.DataFrame({"subject": [1, 1, 1], "type": ["velocity"] * 3})
    w = pd.DataFrame({"home": [0, 0, 0], "weighted": [0.2, 0.5, 0.3]})
    assert anomaly_abstract(anomaly_groups(det, w)) == 0.5
    w2 = pd.DataFrame({"home": [0, 1, 1], "weighted": [0.2, 0.5, 0.3]})
    g = anomaly_groups(det, w2)
    assert anomaly_abstract(g) == pytest.approx(0.7)
    assert anomaly_abstract(g, region=1) == 0.5
    assert anomaly_abstract(groups_frame([])) == 0
    # duplicating a lower-scored detection into an existing group changes nothing
    det3 = pd.DataFrame({"subject": [1, 1, 1, 1], "type": ["velocity"] * 4})
    w3 = pd.DataFrame({"home": [0, 1, 1, 1], "weighted": [0.2, 0.5, 0.3, 0.1]})
    assert anomaly_abstract(anomaly_groups(det3, w3)) == anomaly_abstract(g)


def one_region_map():
    return SemanticMap("one", [Region("all", RegionType.STREET, square(-500, -50, 500, 50), 50 / 3.6,
                                      [[-500, 0], [500, 0]])])


def test_single_region_identity():
    rec = car_line([(0, 12.0), (12, 10.0), (24, 8.0), (60, 20.0)])
    res = analyze_recording(rec, one_region_map())
    row = res.regions.iloc[0]
    for k in ("interaction", "anomaly", "relevance"):
        assert row[k] == pytest.approx(res.dataset[k])
    assert res.regions.iloc[1][["interaction", "anomaly", "relevance"]].tolist() == [0, 0, 0]


def test_single_track_dataset_equals_track():
    rec = Recording("one", 25.0, [straight_track(0, (0, 0), 0.0, 20.0, 100)])
    res = analyze_recording(rec, one_region_map())
    for k in ("interaction", "anomaly", "relevance"):
        assert res.dataset[k] == pytest.approx(res.tracks.iloc[0][k])


def test_dataset_is_script_sum():
    rec = car_line([(i * 9.0, 10.0 + (i % 3)) for i in range(10)])
    res = analyze_recording(rec, one_region_map())
    p = res.punctual
    total_i = total_r = 0.0
    for tr in rec.tracks:
        si = np.zeros(len(tr))
        sr = np.zeros(len(tr))
        sel = p[p["track"] == tr.track_id]
        for f, a, b in zip(sel["frame"], sel["interaction"], sel["relevance"]):
            si[f - tr.frames[0]] = a
            sr[f - tr.frames[0]] = b
        total_i += si[0] + sum(max(y - x, 0) for x, y in zip(si, si[1:]))
        total_r += sr[0] + sum(max(y - x, 0) for x, y in zip(sr, sr[1:]))
    assert res.dataset["interaction"] == pytest.approx(total_i, rel=1e-12)
    assert res.dataset["relevance"] == pytest.approx(total_r, rel=1e-12)


def test_heatmap_examples():
    smap = SemanticMap("h", [Region("a", RegionType.STREET, square(0, 0, 10, 10))])
    g = heatmap(smap, [100.0], resolution=2.0)
    assert g.values.shape == (5, 5)
    np.testing.assert_allclose(g.values, 4.0)
    assert not heatmap(smap, [0.0]).values.any()


def test_heatmap_overlap_additive():
    a = Region("a", RegionType.STREET, square(0, 0, 10, 10))
    b = Region("b", RegionType.WALKWAY, square(4, 4, 14, 14))
    both = heatmap(SemanticMap("ab", [a, b]), [10.0, 30.0])
    ga = heatmap(SemanticMap("ab", [a, b]), [10.0, 0.0])
    gb = heatmap(SemanticMap("ab", [a, b]), [0.0, 30.0])
    np.testing.assert_allclose(both.values, ga.values + gb.values)
    assert both.values.sum() == pytest.approx(40.0)


@given(st.floats(0.3, 5.0), st.floats(0, 100))
def test_heatmap_conserves_mass(res, v):
    smap = SemanticMap("t", [Region("tri", RegionType.STREET, [[0, 0], [17, 3], [5, 11]]),
                             Region("tiny", RegionType.STREET, square(20, 20, 20.1, 20.1))])
    g = heatmap(smap, [v, v], resolution=res)
    assert g.values.sum() == pytest.approx(2 * v, rel=0.01)


def test_top_k():
    t = pd.DataFrame({"track": [3, 1, 2, 4], "frame": [0, 0, 0, 0], "relevance": [1.0, 2.0, 1.0, 0.5]})
    assert top_k(t, "relevance", 0).empty
    assert top_k(t, "relevance", 10)["track"].tolist() == [1, 2, 3, 4]
    assert top_k(t, "relevance", 2)["track"].tolist() == [1, 2]
    with pytest.raises(ValueError):
        top_k(t, "speed", 2)


def test_near_miss_ranked_first():
    fps = 25.0
    tracks = [
        straight_track(0, (-100, 0.0), 0.0, 10.0, 150, fps),
        straight_track(1, (-60, 0.0), 0.0, 10.0, 150, fps),  # comfortable 4 s gap
        straight_track(2, (-100, 20.0), 0.0, 10.0, 150, fps),
        straight_track(3, (-93, 20.0), 0.0, 10.0, 150, fps),  # 0.25 s tailgating
    ]
    smap = SemanticMap("m", [Region("all", RegionType.STREET, square(-500, -50, 500, 50))])
    res = analyze_recording(Recording("nm", fps, tracks), smap)
    assert top_k(res.tracks, "relevance", 1)["track"].tolist() == [2]


def test_compare_table():
    s = {"recording_id": "a", "track_count": 4, "duration": 10.0,
         "dataset_scores": {"interaction": 8.0, "anomaly": 2.0, "relevance": 10.0},
         "baseline_scores": {"interaction": 1.0}}
    t = compare_table([s])
    assert len(t) == 1 and t["interaction_per_track"].iloc[0] == 2.0
    t2 = compare_table([s, s])
    assert t2.iloc[0].equals(t2.iloc[1])


def test_compare_orders_by_construction():
    dense = car_line([(i * 8.0, 10.0) for i in range(8)])
    sparse = car_line([(i * 60.0, 10.0) for i in range(8)])
    sums = [analyze_recording(r, one_region_map()).summary() for r in (dense, sparse)]
    t = compare_table(sums)
    assert t["interaction"].iloc[0] > t["interaction"].iloc[1]
