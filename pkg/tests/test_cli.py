import hashlib
import json
import time
from pathlib import Path

import pytest

from nngate.cli import format_best_cell, main, parse_coverages
from nngate.formats import read_neighbor_cache, read_predictions

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(*argv):
    return main([str(a) for a in argv])


def load(path):
    return json.loads(Path(path).read_text())


def synth(tmp_path, config, name="data"):
    out = tmp_path / name
    assert run("synth", CONFIGS / config, "--out", out) == 0
    return out


def pipeline(tmp, config, k=50, grid="1-8"):
    d = synth(tmp, config)
    assert run("index", d / "base.cgeb", "--out", tmp / "index.cgeb") == 0
    assert run("neighbors", tmp / "index.cgeb", d / "queries.cgeb", "--k", k, "--out", tmp / "cache.cgnc") == 0
    assert run("tune", tmp / "cache.cgnc", d / "predictions.csv", "--n-grid", grid, "--out", tmp / "tune.json") == 0
    return d


def test_best_cell_format():
    assert format_best_cell(24, 0.48) == "24 / 0.480"
    assert format_best_cell(60, 0.4771) == "60 / 0.477"


def test_parse_coverages():
    assert parse_coverages("0.1:0.3:0.1") == [0.1, 0.2, 0.3]
    assert parse_coverages("0.25,0.5") == [0.25, 0.5]
    with pytest.raises(ValueError):
        parse_coverages("0.5,1.0")


def test_gain_on_flat_dataset(tmp_path):
    d = pipeline(tmp_path, "flat.json", k=20)
    assert run("gain", tmp_path / "cache.cgnc", d / "predictions.csv", "--n", 3, "--out", tmp_path / "g.json") == 0
    assert abs(load(tmp_path / "g.json")["normalized_confidence_gain"]) <= 1e-12


def test_flat_curve_below_one(tmp_path):
    (tmp_path / "c.csv").write_text("coverage,accuracy\n0.05,0.6\n0.5,0.6\n1.0,0.6\n")
    assert run("gain", "--from-curve", tmp_path / "c.csv", "--out", tmp_path / "g.json") == 0
    assert abs(load(tmp_path / "g.json")["normalized_confidence_gain"]) <= 1e-12


def test_tune_constructed_n4(tmp_path):
    pipeline(tmp_path, "n4_dominant.json")
    tuned = load(tmp_path / "tune.json")
    assert tuned["best_n"] == 4
    assert tuned["grid"] == list(range(1, 9))


def test_curve_replay_matches_direct_gain(tmp_path):
    d = pipeline(tmp_path, "n4_dominant.json")
    cache, preds = tmp_path / "cache.cgnc", d / "predictions.csv"
    assert run("curve", cache, preds, "--n", 2, "--out", tmp_path / "curve.csv") == 0
    assert run("gain", cache, preds, "--n", 2, "--out", tmp_path / "direct.json") == 0
    assert run("gain", "--from-curve", tmp_path / "curve.csv", "--n", 2, "--out", tmp_path / "replay.json") == 0
    direct, replay = load(tmp_path / "direct.json"), load(tmp_path / "replay.json")
    for key in ("acc_b", "confidence_gain", "max_confidence_gain", "normalized_confidence_gain"):
        assert abs(direct[key] - replay[key]) <= 1e-12


def outputs(root: Path):
    return {
        p.relative_to(root): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and not p.name.endswith("manifest.json")
    }


def full_run(root: Path, seed=3):
    root.mkdir()
    d = synth(root, "n4_dominant.json")
    run("index", d / "base.cgeb", "--out", root / "index.cgeb")
    run("neighbors", root / "index.cgeb", d / "queries.cgeb", "--k", 30, "--embedder", "emb",
        "--out", root / "cache.cgnc", "--threads", 3)
    assert run("split", d / "predictions.csv", "--seed", seed, "--subsets", 1, "--out", root / "split.json") == 0
    run("tune", root / "cache.cgnc", d / "predictions.csv", "--split", root / "split.json", "--n-grid", "1-6",
        "--out", root / "tune.json")
    run("curve", root / "cache.cgnc", d / "predictions.csv", "--n", 4, "--out", root / "curve.csv")
    run("gain", root / "cache.cgnc", d / "predictions.csv", "--n", 4, "--subset", "internal_test_1",
        "--split", root / "split.json", "--out", root / "gain.json")
    (root / "combo.json").write_text(json.dumps({"models": [
        {"embedder": "a", "cache": "cache.cgnc", "tune": "tune.json"},
        {"embedder": "b", "cache": "cache.cgnc", "best_n": 1, "train_ncg": 0.1},
    ]}))
    assert run("combine", root / "combo.json", d / "predictions.csv", "--coverage", "0.2,0.5",
               "--out", root / "combined.csv", "--gain-out", root / "combined_gain.json") == 0
    assert run("report", root, "--out", root / "report") == 0


def test_reruns_are_byte_identical(tmp_path):
    full_run(tmp_path / "a")
    full_run(tmp_path / "b")
    a, b = outputs(tmp_path / "a"), outputs(tmp_path / "b")
    assert a.keys() == b.keys() and len(a) > 10
    assert a == b
    # every command left a manifest
    assert len(list((tmp_path / "a").rglob("*manifest.json"))) == 9


def test_manifest_contents(tmp_path):
    d = synth(tmp_path, "flat.json")
    m = load(d / "manifest.json")
    assert m["command"] == "synth"
    assert list(m["inputs"].values())[0] == hashlib.sha256((CONFIGS / "flat.json").read_bytes()).hexdigest()
    assert {"config", "tool_version", "wall_time_s", "outputs"} <= m.keys()


def test_combine_and_report_outputs(tmp_path):
    full_run(tmp_path / "r")
    root = tmp_path / "r"
    rows = (root / "combined.csv").read_text().splitlines()
    assert rows[0] == "per_model_coverage,total_coverage,accuracy"
    totals = [float(r.split(",")[1]) for r in rows[1:]]
    # both entries share a cache, so the union is at least each model's share
    assert totals[0] >= 0.2 and totals[1] >= 0.5
    table = (root / "report" / "best_n_table.csv").read_text().splitlines()
    assert table[0] == "classifier,emb"
    assert table[1].startswith("predictions,4 / ")
    summary = load(root / "report" / "summary.json")
    assert summary["best"][0]["best_n"] == 4


def test_exit_code_invalid_input(tmp_path, capsys):
    bad = tmp_path / "bad.cgeb"
    bad.write_bytes(b"XXXX" + bytes(40))
    assert run("index", bad, "--out", tmp_path / "i.cgeb") == 1
    err = capsys.readouterr().err
    assert "bad magic at offset 0" in err and "bad.cgeb" in err
    assert not (tmp_path / "i.cgeb").exists()


def test_exit_code_io_failure(tmp_path):
    assert run("index", tmp_path / "missing.cgeb", "--out", tmp_path / "i.cgeb") == 2
    d = synth(tmp_path, "flat.json")
    assert run("index", d / "base.cgeb", "--out", tmp_path / "i.cgeb") == 0
    # create-new: refusing to clobber an existing output is an I/O failure
    assert run("index", d / "base.cgeb", "--out", tmp_path / "i.cgeb") == 2


def test_tune_grid_deeper_than_cache(tmp_path):
    d = pipeline(tmp_path, "flat.json", k=5, grid="1-3")
    cache, preds = tmp_path / "cache.cgnc", d / "predictions.csv"
    assert run("tune", cache, preds, "--n-grid", "1-8", "--out", tmp_path / "t2.json") == 1
    assert run("tune", cache, preds, "--n-grid", "1-8", "--clip-grid", "--out", tmp_path / "t3.json") == 0
    assert load(tmp_path / "t3.json")["grid"] == [1, 2, 3, 4, 5]


def test_neighbors_defaults_k_1000(tmp_path):
    d = synth(tmp_path, "flat.json")
    run("index", d / "base.cgeb", "--out", tmp_path / "i.cgeb")
    assert run("neighbors", tmp_path / "i.cgeb", d / "queries.cgeb", "--out", tmp_path / "c.cgnc") == 0
    cache = read_neighbor_cache(tmp_path / "c.cgnc")
    assert cache.k == 1000 and len(cache) == len(read_predictions(d / "predictions.csv"))


def test_reference_pipeline_under_a_minute(tmp_path):
    started = time.perf_counter()
    d = synth(tmp_path, "reference.json")
    assert run("index", d / "base.cgeb", "--out", tmp_path / "index.cgeb") == 0
    assert run("neighbors", tmp_path / "index.cgeb", d / "queries.cgeb", "--out", tmp_path / "cache.cgnc") == 0
    assert run("tune", tmp_path / "cache.cgnc", d / "predictions.csv", "--out", tmp_path / "tune.json") == 0
    best = load(tmp_path / "tune.json")["best_n"]
    assert run("gain", tmp_path / "cache.cgnc", d / "predictions.csv", "--n", best, "--out", tmp_path / "g.json") == 0
    assert time.perf_counter() - started < 60
