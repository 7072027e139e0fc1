import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from trajscore.config import Config
from trajscore.detections import ALL_TYPES, Detection, DetectionType, table_from_columns
from trajscore.scoring import (clamp_scores, gamma_weight, interaction_table, raw_scores, relevance_punctual,
                               score_detection, select_context, weighted_detections)

import oracles


def random_grid(kind, n, rng):
    values = rng.uniform(-20, 20, n) if kind in ("lon_accel", "lat_accel") else rng.uniform(0, 10, n)
    if kind in ("thw", "ttc", "dmttcp"):
        values = np.concatenate([values[:-2], [0.0, 1e-4]])
    limits = rng.uniform(0.1, 8, n)
    msum = rng.uniform(0, 10, n)
    return values, limits, msum


def test_table_examples():
    assert score_detection(Detection(DetectionType.THW, 0, 1.0, 0, partner=1)) == 1.0
    assert score_detection(Detection(DetectionType.THW, 0, 0.25, 0, partner=1)) == 2.0
    assert score_detection(Detection(DetectionType.TTC, 0, 2.0, 0, partner=1), Config(kappa=2)) == 2.0
    assert score_detection(Detection(DetectionType.AREA_USAGE, 0, 1.0, 0)) == 5.0
    assert score_detection(Detection(DetectionType.DRIVING_BEHAVIOR, 0, 100.0, 0)) == 120.0


@pytest.mark.parametrize("kind", ALL_TYPES)
def test_raw_scores_match_oracle(kind):
    rng = np.random.default_rng(abs(hash(kind)) % 2**32)
    values, limits, msum = random_grid(kind, 1000, rng)
    for kappa in (1.0, 2.5):
        got = raw_scores(np.full(1000, kind), values, limits, msum, kappa)
        ref = np.array([oracles.table_score(kind, v, l, m, kappa) for v, l, m in zip(values, limits, msum)])
        np.testing.assert_allclose(got, ref, rtol=0, atol=1e-12)
        clamped = clamp_scores(np.full(1000, kind), got, Config(kappa=kappa))
        assert (clamped >= 0).all() and (clamped <= oracles.cap(kind, kappa)).all()


@given(st.sampled_from(["ttc", "drac"]), st.floats(0.01, 10))
def test_kappa_scaling(kind, value):
    s1 = clamp_scores([kind], raw_scores([kind], [value], kappa=1.0), Config(kappa=1.0))[0]
    s2 = clamp_scores([kind], raw_scores([kind], [value], kappa=2.0), Config(kappa=2.0))[0]
    if s1 < 2.0:
        assert s2 == pytest.approx(2 * s1)


@given(st.sampled_from([t for t in ALL_TYPES if t not in ("ttc", "drac")]), st.floats(0.01, 10))
def test_kappa_invariant_types(kind, value):
    a = raw_scores([kind], [value], [1.0], [2.0], kappa=1.0)
    b = raw_scores([kind], [value], [1.0], [2.0], kappa=3.0)
    assert a[0] == b[0]


def det_frame(rows):
    """rows = [(type, subject, partner, value)] at frame 0."""
    return table_from_columns({"type": [r[0] for r in rows], "subject": [r[1] for r in rows],
                               "partner": [-1 if r[2] is None else r[2] for r in rows],
                               "start": [0] * len(rows), "end": [0] * len(rows),
                               "value": [float(r[3]) for r in rows]})


def test_interaction_examples():
    tab = interaction_table(det_frame([]), np.zeros(0))
    assert len(tab) == 0
    d = det_frame([("thw", 0, 1, 1.0)])
    tab = interaction_table(d, np.array([1.0]))
    assert tab["interaction"].tolist() == [pytest.approx(1.1)]
    d = det_frame([("wp", 0, None, 4.0)])
    tab = interaction_table(d, np.array([2.0]))
    assert tab["interaction"].tolist() == [2.0] and tab["partners"].tolist() == [0]


@settings(max_examples=80)
@given(st.lists(st.tuples(st.integers(0, 4), st.one_of(st.none(), st.integers(0, 4)),
                          st.floats(0, 5, allow_nan=False)), max_size=14))
def test_interaction_matches_brute_force(raw):
    rows = [(s, p, v) for s, p, v in raw if p != s]
    seen, dets = set(), []
    for s, p, v in rows:  # one detection per (subject, partner, type); use thw for pairs, wp for solo
        key = (s, p)
        if key in seen:
            continue
        seen.add(key)
        dets.append(("wp" if p is None else "thw", s, p, v))
    scores = np.array([d[3] for d in dets])
    tab = interaction_table(det_frame(dets), scores)
    got = dict(zip(tab["track"], tab["interaction"]))
    flat = [(d[1], d[2], d[3]) for d in dets]
    for s in range(5):
        assert got.get(s, 0.0) == pytest.approx(oracles.interaction(flat, s), abs=1e-9)


@given(st.floats(0.1, 10))
def test_interaction_scale_equivariance(c):
    dets = [("thw", 0, 1, 1.0), ("ttc", 1, 2, 1.0), ("thw", 2, 3, 1.0), ("wp", 3, None, 1.0)]
    s = np.array([0.7, 1.3, 0.4, 2.0])
    a = interaction_table(det_frame(dets), s)["interaction"].to_numpy()
    b = interaction_table(det_frame(dets), c * s)["interaction"].to_numpy()
    np.testing.assert_allclose(b, c * a, rtol=1e-12)


def test_gamma_examples():
    assert gamma_weight(1, 1) == 1.0
    assert gamma_weight(100, 100) == pytest.approx(0.1)
    assert gamma_weight(1000, 1) == 10.0  # cap


@given(st.integers(1, 500), st.integers(1, 500))
def test_gamma_antitone(u, m):
    g1 = gamma_weight(u, m, cap=math.inf)
    g2 = gamma_weight(u, m + 1, cap=math.inf)
    assert g2 < g1


def test_straddle_example():
    w = select_context([0.1, 5.0], [0.6, 0.4])
    assert w.tolist() == [pytest.approx(0.6), pytest.approx(0.4)]
    assert float(np.dot(w, [0.1, 5.0])) == pytest.approx(oracles.cheapest_context([0.1, 5.0], [0.6, 0.4]))


def test_greedy_counterexample():
    """Ascending-gamma accumulation is beaten by a different covering subset."""
    g, f = [0.0, 10.0, 11.0], [0.5, 0.1, 0.5]
    w = select_context(g, f)
    assert float(np.dot(w, g)) == pytest.approx(5.5)
    greedy = select_context(g, f, exhaustive=False)
    assert float(np.dot(greedy, g)) == pytest.approx((0.5 * 0 + 0.1 * 10 + 0.5 * 11) / 1.1)
    assert float(np.dot(greedy, g)) > float(np.dot(w, g))


@settings(max_examples=80)
@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0.01, 1.0)), min_size=1, max_size=7))
def test_context_selection_vs_enumeration(rows):
    g, f = [r[0] for r in rows], [r[1] for r in rows]
    w = select_context(g, f)
    assert w.sum() == pytest.approx(1.0)
    assert float(np.dot(w, g)) == pytest.approx(oracles.cheapest_context(g, f), abs=1e-9)


def test_relevance_examples():
    assert relevance_punctual(0, 0) == 0
    assert relevance_punctual(2, 3) == pytest.approx(16.3)
    assert relevance_punctual(0, 4) == pytest.approx(0.4)


@given(st.floats(0, 100), st.floats(0, 100), st.floats(0, 10))
def test_relevance_monotone(a, b, d):
    assert relevance_punctual(a + d, b) >= relevance_punctual(a, b)
    assert relevance_punctual(a, b + d) >= relevance_punctual(a, b)


def test_weighted_detections_two_regions():
    # region 0: 4 users, 2 velocity detections; region 1: 1 user, 1 detection
    memb = pd.DataFrame({"track": [0, 1, 2, 3, 4], "frame": [0, 0, 0, 0, 0], "idx": 0,
                         "region": [0, 0, 0, 0, 1], "fraction": 1.0})
    det = table_from_columns({"type": ["velocity"] * 3, "subject": [0, 1, 4], "start": [0, 0, 0],
                              "end": [0, 0, 0], "value": [15.0] * 3, "limit": [10.0] * 3})
    w, ctx = weighted_detections(det, np.array([5.0, 5.0, 5.0]), memb, 3, Config())
    assert w["gamma"].tolist() == [pytest.approx(4 / 2 ** 1.5)] * 2 + [1.0]
    assert w["home"].tolist() == [0, 0, 1]
    assert ctx.count(0, "velocity") == 2 and ctx.users.tolist() == [4, 1, 0]
