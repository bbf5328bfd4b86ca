import csv
import json

import numpy as np
import pytest

from anadp.cli import jsonable, main, run
from anadp.config import ExperimentConfig, load_dataset
from anadp.data import load_csv, make_blobs, random_text, windows
from anadp.errors import ConfigurationError

SMALL = dict(dataset="blobs", n_samples=200, dim=4, separation=3.0, epochs=2, batch_size=20,
             clip_norm=1.0, eval_every=5, log_every=5)


def write_config(path, **kw):
    path.write_text("".join(f"{k}: {json.dumps(v)}\n" for k, v in kw.items()))
    return path


def test_blobs_generator_contract():
    ds = make_blobs(4, 2, 1e3, 7)
    np.testing.assert_array_equal(ds.y, [0, 0, 1, 1])
    w = np.ones(2)
    assert (ds.X[:2] @ w < 0).all() and (ds.X[2:] @ w > 0).all()
    np.testing.assert_array_equal(make_blobs(50, 3, 1.0, 2).X, make_blobs(50, 3, 1.0, 2).X)


def test_csv_roundtrip_and_errors(tmp_path):
    good = tmp_path / "good.csv"
    good.write_text("f0,f1,label\n0.5,1.5,0\n-1,2,1\n")
    ds = load_csv(good)
    assert ds.X.shape == (2, 2) and list(ds.y) == [0, 1]
    bad = tmp_path / "bad.csv"
    bad.write_text("f0,f1,label\n0.5,1.5,0\n-1,oops,1\n")
    with pytest.raises(ConfigurationError, match=":3:"):
        load_csv(bad)
    out_of_range = tmp_path / "range.csv"
    out_of_range.write_text("f0,label\n0.5,2\n")
    with pytest.raises(ConfigurationError, match="out of range"):
        load_csv(out_of_range, num_classes=2)
    with pytest.raises(ConfigurationError):
        (tmp_path / "hdr.csv").write_text("a,b\n1,0\n")
        load_csv(tmp_path / "hdr.csv")


def test_windows_left_pad():
    ds = windows(["ab"], 3)
    np.testing.assert_array_equal(ds.X, [[0, 0, 0], [0, 0, 2]])
    assert len(random_text(1000, 1)) > 0
    assert sum(map(len, random_text(1000, 1))) == 1000


def test_config_strict_parsing(tmp_path):
    p = write_config(tmp_path / "c.yaml", lr=0.1, epsilon=8, delta="1e-5", modes=["dp_uniform", "anadp"])
    cfg = ExperimentConfig.load(p)
    assert cfg.lr == 0.1 and cfg.delta == 1e-5 and cfg.epsilon == 8.0
    with pytest.raises(ConfigurationError, match="unknown config keys: learning_rate"):
        ExperimentConfig.load(write_config(tmp_path / "u.yaml", learning_rate=0.1))
    with pytest.raises(ConfigurationError, match="epochs"):
        ExperimentConfig.load(write_config(tmp_path / "t.yaml", epochs=2.5))
    with pytest.raises(ConfigurationError, match="seeds"):
        ExperimentConfig.from_mapping({"seeds": []})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_mapping({"dataset": "csv", "dataset_path": str(tmp_path / "missing.csv")})


def test_train_subcommand_is_byte_reproducible(tmp_path):
    cfg_path = write_config(tmp_path / "c.yaml", **SMALL)
    for out in ("a", "b"):
        assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path / out), "--seed", "5"]) == 0
    a = (tmp_path / "a" / "run.json").read_bytes()
    assert a == (tmp_path / "b" / "run.json").read_bytes()
    doc = json.loads(a)
    assert doc["seed"] == 5 and doc["config"]["seed"] == 5 and doc["config"]["dim"] == 4
    assert doc["run"]["final_epsilon"] <= 8.0


def test_calibrate_subcommand(tmp_path, capsys):
    cfg_path = write_config(tmp_path / "c.yaml", epsilon=8.0, delta=1e-5, sampling_rate=0.01, steps=1000)
    assert main(["calibrate", "--config", str(cfg_path), "--out", str(tmp_path)]) == 0
    assert "sigma0=" in capsys.readouterr().out
    doc = json.loads((tmp_path / "calibrate.json").read_text())
    assert 8.0 - 1e-3 <= doc["achieved_epsilon"] <= 8.0


def test_compare_table_and_ttest(tmp_path):
    cfg = ExperimentConfig(**SMALL, seeds=[0, 1, 2], modes=["dp_uniform", "anadp"])
    out = run("compare", cfg, tmp_path)
    assert [r["seed"] for r in out["rows"]] == [0, 1, 2]
    test = out["tests"][0]
    assert test["mode"] == "anadp" and test["baseline"] == "dp_uniform"
    with open(tmp_path / "compare.csv") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    assert rows[0] == ["seed", "dp_uniform", "anadp"] and len(rows) == 4
    assert json.loads((tmp_path / "compare.json").read_text())["seeds"] == [0, 1, 2]


def test_heatmap_uniform_rows_equal_sigma_c(tmp_path):
    cfg = ExperimentConfig(**{**SMALL, "clip_norm": 2.5}, mode="dp_uniform", model="mlp1", hidden_dim=3)
    info = run("heatmap", cfg, tmp_path)
    lines = (tmp_path / "heatmap.csv").read_text().splitlines()
    assert lines[0].startswith("# config: ") and lines[1] == "step,group,stddev"
    vals = [float(r.split(",")[2]) for r in lines[2:]]
    assert vals and all(v == pytest.approx(info["sigma0"] * 2.5, rel=1e-8) for v in vals)


def test_failed_run_leaves_no_partial_outputs(tmp_path, monkeypatch):
    import anadp.cli as cli

    cfg = ExperimentConfig(**SMALL, seeds=[0, 1], modes=["dp_uniform", "anadp"])
    original = cli.Artifacts.write

    def write_then_fail(self, name, text):
        original(self, name, text)
        if name == "compare.csv":
            raise RuntimeError("disk full")

    monkeypatch.setattr(cli.Artifacts, "write", write_then_fail)
    with pytest.raises(RuntimeError):
        run("compare", cfg, tmp_path)
    assert list(tmp_path.iterdir()) == []


def test_main_reports_config_errors(tmp_path, capsys):
    p = write_config(tmp_path / "c.yaml", bogus=1)
    assert main(["train", "--config", str(p)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_exposure_subcommand(tmp_path):
    cfg = ExperimentConfig(model="char_lm", hidden_dim=16, embed_dim=4, dataset="canary_text", corpus_tokens=3000,
                           canary_digits=2, canary_repetitions=5, epochs=1, batch_size=64, mode="non_private",
                           eval_every=10**6, log_every=10**6)
    out = run("exposure", cfg, tmp_path)
    rep = json.loads((tmp_path / "exposure.json").read_text())["report"]
    assert rep == jsonable(out["report"]) and rep["epsilon"] == "inf"
    assert rep["space_size"] == 100 and 1 <= rep["canary_rank"] <= 100


def test_load_dataset_rejects_canary_text():
    with pytest.raises(ConfigurationError):
        load_dataset(ExperimentConfig(dataset="canary_text"))
