import json
import subprocess
import sys

import numpy as np
import pytest

from trainless import harness
from trainless.cli import main
from trainless.data import SynthConfig, load_dataset, save_dataset, synth_qo
from trainless.diagnostics import read_csv, read_pgm
from trainless.fit import FitConfig
from trainless.labels import LabelSet, MissingMaskError
from trainless.train import TrainConfig


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    return save_dataset(synth_qo(SynthConfig(seed=7)), tmp_path_factory.mktemp("data") / "synth")


@pytest.fixture(scope="module")
def fixed_dir(tmp_path_factory):
    return save_dataset(synth_qo(SynthConfig(seed=7), split=(20, 30)), tmp_path_factory.mktemp("data") / "fixed")


def run_cli(*argv):
    return main([str(a) for a in argv])


def test_accuracy_cases():
    labels = LabelSet([0, 1, 2, 1], 3)
    mask = np.ones(4, dtype=bool)
    assert harness.accuracy(np.eye(3)[[0, 1, 2, 1]], labels, mask) == 1.0
    assert harness.accuracy(np.zeros((4, 3)), labels, mask) == 0.25
    with pytest.raises(ValueError):
        harness.accuracy(np.zeros((4, 3)), labels, np.zeros(4, dtype=bool))


def test_accuracy_vs_counting():
    rng = np.random.default_rng(0)
    z = rng.integers(0, 3, (50, 4)).astype(float)
    y = rng.integers(0, 4, 50)
    mask = rng.random(50) < 0.5
    hits = 0
    for i in range(50):
        if mask[i]:
            row = list(z[i])
            hits += row.index(max(row)) == y[i]
    assert harness.accuracy(z, LabelSet(y, 4), mask) == hits / mask.sum()


def test_cmd_fit_linear_perfect_train(synth_dir, tmp_path, capsys):
    out = tmp_path / "fit.json"
    weights = tmp_path / "w.csv"
    assert run_cli("fit", "--data", synth_dir, "--backbone", "linear", "--omega", 0, "--out", out,
                   "--weights", weights) == 0
    rep = json.loads(out.read_text())
    assert rep["train_accuracy"] == 1.0
    assert rep["config"] == {"model": "trainless", "backbone": "linear", "omega": 0.0, "norm": "cn", "hops": 0}
    assert read_csv(weights).shape == (600, 3)
    assert "train=100.00%" in capsys.readouterr().out


def test_cmd_fit_missing_dir(tmp_path, capsys):
    out = tmp_path / "fit.json"
    assert run_cli("fit", "--data", tmp_path / "missing", "--out", out) != 0
    assert not out.exists() and list(tmp_path.iterdir()) == []
    assert "not found" in capsys.readouterr().err


def test_cmd_fit_use_val_without_val_mask(tmp_path, capsys):
    ds = synth_qo(SynthConfig(seed=1), split=(20, 0))
    assert ds.labels.val is None
    save_dataset(ds, tmp_path / "d")
    assert run_cli("fit", "--data", tmp_path / "d", "--use-val-labels") == 1
    assert "val" in capsys.readouterr().err


def test_run_fit_missing_val_raises():
    ds = synth_qo(SynthConfig(seed=1), split=(20, 0))
    with pytest.raises(MissingMaskError, match="val"):
        harness.run_fit(ds, use_val_labels=True)


def test_cmd_fit_trained(fixed_dir, capsys):
    assert run_cli("fit", "--data", fixed_dir, "--trained", "--epochs", 20, "--json") == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["config"]["model"] == "trained" and rep["config"]["epochs"] == 20
    assert rep["split"] == {"source": "fixed"}


def test_fit_timing_optional(fixed_dir):
    ds = load_dataset(fixed_dir)
    assert "fit_seconds" not in harness.run_fit(ds)[0]
    assert harness.run_fit(ds, timing=True)[0]["fit_seconds"] >= 0


def test_grid_of_one_equals_fit():
    ds = synth_qo(SynthConfig(seed=7))
    cfg = FitConfig(omega=0.1, norm="ra", hops=2)
    fit_rep, _, _ = harness.run_fit(ds, "sgc", cfg, seed=3)
    grid = harness.SweepGrid(omegas=(0.1,), norm_kinds=("ra",), backbones=("sgc",), hops=(2,))
    sweep = harness.run_sweep(ds, grid, n_splits=1, seed=3)
    run = sweep["splits"][0]["runs"][0]
    assert run == {k: fit_rep[k] for k in ("config", "train_accuracy", "val_accuracy", "test_accuracy")}
    assert sweep["aggregate"]["test_accuracy"] == {"mean": fit_rep["test_accuracy"], "sd": 0.0, "runs": 1}


def test_sweep_selection_invariant():
    ds = synth_qo(SynthConfig(seed=4, p_intra=0.03, p_inter=0.01))
    rep = harness.run_sweep(ds, harness.SweepGrid(backbones=("linear", "sgc", "cs")), n_splits=3, seed=0)
    for s, chosen in zip(rep["splits"], rep["aggregate"]["selected_configs"]):
        vals = [r["val_accuracy"] for r in s["runs"]]
        best = s["runs"][s["selected"]]
        assert best["val_accuracy"] == max(vals) and s["selected"] == vals.index(max(vals))
        assert best["config"] == chosen
    tests = [s["runs"][s["selected"]]["test_accuracy"] for s in rep["splits"]]
    assert rep["aggregate"]["test_accuracy"]["mean"] == pytest.approx(np.mean(tests), rel=1e-15)
    assert rep["aggregate"]["test_accuracy"]["sd"] == pytest.approx(np.std(tests), abs=1e-15)


def test_sweep_grid_order():
    pts = harness.SweepGrid(omegas=(0, 1), norm_kinds=("cn", "ra"), backbones=("sgc",), hops=(0, 2)).points()
    assert [(c.hops, c.norm, c.omega) for _, c in pts][:3] == [(0, "cn", 0.0), (0, "cn", 1.0), (0, "ra", 0.0)]
    assert len(pts) == 8
    with pytest.raises(ValueError):
        harness.SweepGrid(omegas=())


def test_sweep_fixed_split_single_run(fixed_dir):
    rep = harness.run_sweep(load_dataset(fixed_dir), n_splits=10)
    assert rep["n_splits"] == 1 and rep["aggregate"]["test_accuracy"]["sd"] == 0.0


def test_sweep_trained_grid(fixed_dir):
    grid = harness.TrainedGrid(learning_rates=(0.2,), weight_decays=(0.0, 5e-4), epochs=10)
    rep = harness.run_sweep(load_dataset(fixed_dir), trained_grid=grid)
    assert rep["model"] == "trained" and len(rep["splits"][0]["runs"]) == 2


def test_cmd_sweep_byte_identical(synth_dir, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["sweep", "--data", synth_dir, "--splits", 10, "--seed", 7]
    assert run_cli(*args, "--out", a) == 0
    assert run_cli(*args, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    rep = json.loads(a.read_text())
    assert rep["n_splits"] == 10 and len(rep["splits"][0]["runs"]) == 36


def test_sweep_repeatable_flags(synth_dir, capsys):
    assert run_cli("sweep", "--data", synth_dir, "--splits", 2, "--omega", 0, "--omega", 1, "--norm", "aa",
                   "--hops", 2, "--json") == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["grid"]["omegas"] == [0.0, 1.0] and rep["grid"]["norm_kinds"] == ["aa"]


def test_threads_do_not_change_report(monkeypatch):
    ds = synth_qo(SynthConfig(seed=7))
    grid = harness.SweepGrid(backbones=("sgc", "cs"))
    monkeypatch.setenv("TRAINLESS_THREADS", "1")
    one = harness.dumps(harness.run_sweep(ds, grid, n_splits=2))
    monkeypatch.setenv("TRAINLESS_THREADS", "4")
    assert harness.worker_threads() == 4
    assert harness.dumps(harness.run_sweep(ds, grid, n_splits=2)) == one
    monkeypatch.setenv("TRAINLESS_THREADS", "many")
    with pytest.raises(ValueError):
        harness.worker_threads()


def test_bench_schema(fixed_dir):
    rep = harness.run_bench(load_dataset(fixed_dir), train_cfg=TrainConfig(epochs=10), repeats=2)
    assert set(rep) == harness.BENCH_KEYS
    assert rep["dense_products"] == {"trainless": 1, "trained": 21}
    assert rep["trainless_fit_seconds"] > 0 and rep["trained_fit_seconds"] > 0
    json.loads(harness.dumps(rep))


def test_cmd_bench(fixed_dir, tmp_path):
    out = tmp_path / "bench.json"
    assert run_cli("bench", "--data", fixed_dir, "--epochs", 5, "--repeats", 1, "--out", out) == 0
    assert set(json.loads(out.read_text())) == harness.BENCH_KEYS


def test_cmd_diagnose(synth_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("diagnose", "--data", synth_dir, "--backbone", "linear", "--out", a) == 0
    rep = json.loads((a / "qo.json").read_text())
    assert rep["qo"]["inter_mean"] == 0.0 and rep["qo"]["intra_mean"] > 0
    assert rep["alignment_argmax_matches_class"] == 1.0
    gram = read_csv(a / "gram.csv")
    assert gram.shape == (60, 60) and read_pgm(a / "gram.pgm").shape == (60, 60)
    assert read_csv(a / "alignment.csv").shape == (3, 60)
    assert len((a / "gram_nodes.txt").read_text().split()) == 60
    assert sorted(p.name for p in a.iterdir()) == sorted(rep["files"])
    assert run_cli("diagnose", "--data", synth_dir, "--backbone", "linear", "--out", b) == 0
    for p in a.iterdir():
        assert p.read_bytes() == (b / p.name).read_bytes()


def test_cmd_diagnose_needs_out(synth_dir):
    assert run_cli("diagnose", "--data", synth_dir) == 1


def test_cmd_eval(fixed_dir, tmp_path, capsys):
    logits = tmp_path / "z.csv"
    assert run_cli("fit", "--data", fixed_dir, "--logits", logits, "--json") == 0
    fit = json.loads(capsys.readouterr().out)
    assert run_cli("eval", "--data", fixed_dir, "--logits", logits, "--mask", "val", "--json") == 0
    assert json.loads(capsys.readouterr().out)["accuracy"] == fit["val_accuracy"]
    np.savetxt(tmp_path / "bad.csv", np.zeros((2, 3)), delimiter=",")
    assert run_cli("eval", "--data", fixed_dir, "--logits", tmp_path / "bad.csv") == 1


def test_cmd_synth_and_split(tmp_path):
    out = tmp_path / "s"
    assert run_cli("synth", "--n", 90, "--d", 60, "--classes", 3, "--words-per-class", 20, "--seed", 2,
                   "--out", out) == 0
    ds = load_dataset(out)
    assert ds == synth_qo(SynthConfig(n=90, d=60, C=3, words_per_class=20, seed=2))
    assert run_cli("split", "--data", out, "--train-per-class", 5, "--val-per-class", 5, "--out",
                   out / "split.txt") == 0
    ds = load_dataset(out)
    assert ds.labels.train.sum() == 15 and ds.labels.val.sum() == 15 and ds.labels.test.sum() == 60


def test_cmd_synth_invalid_config(tmp_path, capsys):
    assert run_cli("synth", "--classes", 4, "--out", tmp_path / "x") == 1
    assert "exceeds" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_console_entry_point(fixed_dir):
    proc = subprocess.run([sys.executable, "-m", "trainless.cli", "fit", "--data", str(fixed_dir), "--json"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["command"] == "fit"
