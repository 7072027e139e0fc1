import json

import pandas as pd
import pytest

from trajscore.cli import main
from trajscore.config import Config, ConfigError, config_from_dict, load_config
from trajscore.dataset_io import Recording
from trajscore.pipeline import analyze_recording
from trajscore.report import top_from_report, write_report
from trajscore.synthetic import synthetic_intersection


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--tracks", "25", "--duration", "40", "--seed", "4", "--out", str(d)]) == 0
    return d


def analyze_args(d, out, *extra):
    return ["analyze", "--tracks", str(d / "tracks.csv"), "--tracks-meta", str(d / "tracksMeta.csv"),
            "--recording-meta", str(d / "recordingMeta.csv"), "--map", str(d / "map.json"),
            "--out", str(out), *extra]


def test_synth_files(synth_dir):
    names = {p.name for p in synth_dir.iterdir()}
    assert {"tracks.csv", "tracksMeta.csv", "recordingMeta.csv", "map.json"} <= names


def test_analyze_report_schema(synth_dir, tmp_path):
    assert main(analyze_args(synth_dir, tmp_path / "r")) == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    for key in ("recording_id", "config_hash", "dataset_scores", "tracks", "regions", "detection_counts_by_type"):
        assert key in rep
    assert set(rep["dataset_scores"]) == {"interaction", "anomaly", "relevance"}
    assert len(rep["tracks"]) == 25
    assert {"id", "scores", "peak_frame"} <= set(rep["tracks"][0])
    for name in ("track_scores.csv", "region_scores.csv", "detections.csv", "heatmap_relevance.csv",
                 "heatmap_anomaly.png", "top_tracks.png"):
        assert (tmp_path / "r" / name).exists()
    tracks = pd.read_csv(tmp_path / "r" / "track_scores.csv")
    assert tracks["relevance"].sum() == pytest.approx(rep["dataset_scores"]["relevance"], rel=1e-9)


def test_analyze_deterministic(synth_dir, tmp_path):
    assert main(analyze_args(synth_dir, tmp_path / "a", "--no-figures")) == 0
    assert main(analyze_args(synth_dir, tmp_path / "b", "--no-figures")) == 0
    for name in ("report.json", "detections.csv", "punctual_scores.csv", "region_scores.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_top_and_compare(synth_dir, tmp_path, capsys):
    out = tmp_path / "r"
    assert main(analyze_args(synth_dir, out, "--no-figures")) == 0
    capsys.readouterr()
    assert main(["top", "--report", str(out), "--k", "3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("rank,") and len(lines) == 4
    ranked = top_from_report(out, "relevance", 3, "punctual")
    assert ranked["relevance"].is_monotonic_decreasing
    assert main(["compare", "--reports", str(out), str(out), "--out", str(tmp_path / "cmp.csv")]) == 0
    cmp = pd.read_csv(tmp_path / "cmp.csv")
    assert len(cmp) == 2 and cmp.iloc[0].equals(cmp.iloc[1])
    assert (tmp_path / "cmp.png").exists() and (tmp_path / "cmp.json").exists()


def test_exit_codes(synth_dir, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("kappa = 0.5\n")
    assert main(analyze_args(synth_dir, tmp_path / "x", "--config", str(bad))) == 2
    unknown = tmp_path / "unknown.toml"
    unknown.write_text("[scoring]\nfoo = 1\n")
    assert main(analyze_args(synth_dir, tmp_path / "x", "--config", str(unknown))) == 2
    args = analyze_args(synth_dir, tmp_path / "x")
    args[2] = str(tmp_path / "missing.csv")
    assert main(args) == 1
    assert main(["top", "--report", str(tmp_path / "nothing")]) == 1


def test_config_loading(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('[scoring]\nkappa = 2\n[relations]\nscenario = "highway"\n')
    cfg = load_config(p)
    assert cfg.kappa == 2.0 and cfg.scenario == "highway"
    assert cfg.hash() != Config().hash()
    with pytest.raises(ConfigError):
        config_from_dict({"scenario": "rural"})
    with pytest.raises(ConfigError):
        config_from_dict({"cell_size": 0})


def test_concatenation_additive_for_interaction():
    rec_a, smap = synthetic_intersection(12, 30, seed=1)
    rec_b, _ = synthetic_intersection(12, 30, seed=2)
    shifted = []
    for tr in rec_b.tracks:
        # put B's tracks far away in time so no pairs form across the two
        shifted.append(tr.__class__(**{**tr.__dict__, "track_id": tr.track_id + 1000,
                                       "frames": tr.frames + 10_000, "t": tr.t + 400.0}))
    both = Recording("ab", 25.0, rec_a.tracks + shifted)
    ra, rb, rab = (analyze_recording(r, smap) for r in (rec_a, rec_b, both))
    assert rab.dataset["interaction"] == pytest.approx(ra.dataset["interaction"] + rb.dataset["interaction"])
