import math

import numpy as np
import pytest

from oracles import finite_difference, orthonormal_rows, random_onehot
from trainless.data import SynthConfig, synth_qo
from trainless.fit import FitConfig, fit_trainless
from trainless.train import (TrainConfig, TrainingDiverged, landscape_compare, objective, softmax_ce,
                             train_linear, train_pipeline, train_sgc, tune_trained)


def test_ce_saturated_correct():
    b = np.eye(3)
    loss, grad = softmax_ce(50.0 * b, b)
    assert loss < 1e-20
    assert np.abs(grad).max() < 1e-20


def test_ce_uniform():
    b = random_onehot(np.random.default_rng(0), 5, 4)
    loss, _ = softmax_ce(np.zeros((5, 4)), b)
    assert loss == pytest.approx(math.log(4), rel=1e-15)


def test_ce_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    z = rng.standard_normal((4, 3))
    b = random_onehot(rng, 4, 3)
    _, grad = softmax_ce(z, b)
    fd = finite_difference(lambda m: softmax_ce(m, b)[0], z)
    np.testing.assert_allclose(grad, fd, atol=1e-6, rtol=0)


def test_ce_stable_for_huge_logits():
    b = np.array([[0.0, 1.0]])
    loss, _ = softmax_ce(np.array([[1000.0, 0.0]]), b)
    assert loss == pytest.approx(1000.0)


def test_ce_errors():
    with pytest.raises(ValueError):
        softmax_ce(np.array([[np.nan, 0.0]]), np.array([[1.0, 0.0]]))
    with pytest.raises(ValueError):
        softmax_ce(np.zeros((2, 2)), np.zeros((2, 3)))


def test_zero_epochs_returns_init():
    f = np.random.default_rng(2).standard_normal((4, 6))
    b = random_onehot(np.random.default_rng(3), 4, 2)
    w, trace = train_linear(f, b, TrainConfig(epochs=0, seed=9))
    w2, _ = train_linear(f, b, TrainConfig(epochs=0, seed=9))
    np.testing.assert_array_equal(w, w2)
    assert np.abs(w).max() <= 1 / math.sqrt(6)
    assert len(trace) == 1 and trace[0].epoch == 0


def test_separable_fixture_reaches_full_train_accuracy():
    f = np.eye(4)
    b = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=float)
    _, trace = train_linear(f, b, TrainConfig(learning_rate=0.5, epochs=200, weight_decay=0.0))
    assert trace[-1].train_accuracy == 1.0


def test_small_lr_is_monotone():
    rng = np.random.default_rng(4)
    f = rng.standard_normal((20, 8))
    b = random_onehot(rng, 20, 3)
    _, trace = train_linear(f, b, TrainConfig(learning_rate=0.01, epochs=200, weight_decay=1e-3))
    obj = np.array([r.objective for r in trace.records])
    assert np.all(np.diff(obj) <= 1e-15)


def test_divergence_reports_epoch():
    f = np.full((2, 2), 1e200)
    with pytest.raises(TrainingDiverged, match="epoch"):
        train_linear(f, np.eye(2), TrainConfig(learning_rate=1e200, epochs=10))


def test_train_config_validation():
    for kw in ({"learning_rate": 0}, {"epochs": -1}, {"weight_decay": -1e-3}):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


def test_objective_gradient_includes_penalty():
    rng = np.random.default_rng(5)
    f = rng.standard_normal((6, 5))
    b = random_onehot(rng, 6, 3)
    w = rng.standard_normal((5, 3))
    _, grad, _, _ = objective(w, f, b, 0.3)
    fd = finite_difference(lambda m: objective(m, f, b, 0.3)[0], w)
    np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-8)


@pytest.fixture(scope="module")
def synth():
    return synth_qo(SynthConfig(seed=7), split=(20, 30))


def test_train_sgc_zero_hops_is_train_linear(synth):
    cfg = TrainConfig(epochs=5)
    w1, t1 = train_sgc(synth, 0, cfg)
    fit = np.flatnonzero(synth.labels.train)
    w2, t2 = train_linear(synth.x.toarray()[fit], synth.labels.onehot[fit], cfg)
    np.testing.assert_array_equal(w1, w2)
    assert [r.loss for r in t1.records] == [r.loss for r in t2.records]


def test_train_sgc_initial_loss_near_uniform(synth):
    _, trace = train_sgc(synth, 2, TrainConfig(epochs=0))
    assert abs(trace[0].loss - math.log(3)) <= 0.1


def test_train_sgc_fits_fixture(synth):
    _, trace = train_sgc(synth, 2, TrainConfig(learning_rate=0.5, epochs=200, weight_decay=0.0))
    assert trace[-1].train_accuracy == 1.0
    assert trace[-1].test_accuracy is not None and trace[-1].test_accuracy > 0.8


def test_train_is_deterministic(synth):
    _, a = train_sgc(synth, 2, TrainConfig(epochs=20, seed=4))
    _, b = train_sgc(synth, 2, TrainConfig(epochs=20, seed=4))
    assert a.to_dict() == b.to_dict()


def test_train_pipeline_backbones(synth):
    cfg = TrainConfig(epochs=30)
    for backbone in ("linear", "sgc", "cs"):
        w, z, trace = train_pipeline(synth, backbone, 2, cfg)
        assert z.shape == (synth.n, 3) and len(trace) == 31
    with pytest.raises(ValueError):
        train_pipeline(synth, "gat")


def test_tune_selects_best_val(synth):
    out = tune_trained(synth, "sgc", 2, epochs=20)
    vals = [r["val_accuracy"] for r in out["runs"]]
    assert out["best"]["val_accuracy"] == max(vals)
    assert out["selected"] == vals.index(max(vals))


def test_landscape_zero_epochs_well_formed(synth):
    rep = landscape_compare(synth, 2, TrainConfig(epochs=0)).to_dict()
    assert len(rep["trace"]) == 1
    assert set(rep["trainless"]) == {"loss", "train_accuracy", "test_accuracy"}
    assert rep["fit_config"]["hops"] == 2


def test_landscape_trainless_loss_above_converged_trained():
    rng = np.random.default_rng(6)
    f = orthonormal_rows(rng, 8, 40)
    b = random_onehot(rng, 8, 3)
    _, trace = train_linear(f, b, TrainConfig(learning_rate=0.5, epochs=3000, weight_decay=0.0))
    w = fit_trainless(f, b)
    trainless_loss, _ = softmax_ce(f @ w, b)
    assert trainless_loss >= trace[-1].loss


def test_landscape_synth_accuracy_parity(synth):
    rep = landscape_compare(synth, 2, TrainConfig(learning_rate=0.5, epochs=100, weight_decay=0.0))
    assert np.isfinite(rep.trainless_loss)
    assert abs(rep.trainless_test_accuracy - rep.trace[-1].test_accuracy) <= 0.05


def test_trained_argmax_converges_to_trainless():
    rng = np.random.default_rng(7)
    f = orthonormal_rows(rng, 15, 60)
    b = random_onehot(rng, 15, 4)
    w_trained, _ = train_linear(f, b, TrainConfig(learning_rate=0.5, epochs=500, weight_decay=0.0))
    agree = np.mean((f @ w_trained).argmax(1) == (f @ fit_trainless(f, b)).argmax(1))
    assert agree >= 0.95


def test_landscape_rejects_mismatched_hops(synth):
    with pytest.raises(ValueError):
        landscape_compare(synth, 2, TrainConfig(epochs=0), FitConfig(hops=1))
