"""Full-batch gradient descent for the linear baselines (logistic regression, SGC, C&S base)."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .fit import BACKBONES, FeatureCache, FitConfig, fit_pipeline, predict_cs
from .graph import CSParams
from .sparse import argmax_rows

__all__ = [
    "TrainConfig",
    "TraceRecord",
    "TrainTrace",
    "TrainingDiverged",
    "softmax_ce",
    "objective",
    "train_linear",
    "train_sgc",
    "train_pipeline",
    "tune_trained",
    "landscape_compare",
]


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.2
    epochs: int = 100
    weight_decay: float = 5e-4
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")


@dataclass(frozen=True)
class TraceRecord:
    epoch: int
    loss: float
    objective: float
    train_accuracy: float
    test_accuracy: Optional[float] = None


@dataclass
class TrainTrace:
    """One record per visited iterate; record 0 is the initialization."""

    records: list[TraceRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def to_dict(self) -> list[dict]:
        return [asdict(r) for r in self.records]


def softmax_ce(z, b) -> tuple[float, np.ndarray]:
    """Mean cross entropy of row-softmax(z) against one-hot ``b`` and its gradient in ``z``."""
    z = np.asarray(z, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if z.shape != b.shape or z.ndim != 2:
        raise ValueError(f"logit shape {z.shape} does not match label shape {b.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    n = z.shape[0]
    if n == 0:
        raise ValueError("need at least one row")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_norm
    loss = -float(np.sum(b * log_p)) / n
    grad = (np.exp(log_p) - b) / n
    return loss, grad


def objective(w, features, b, weight_decay: float) -> tuple[float, np.ndarray, float, np.ndarray]:
    """``CE(F W, B) + weight_decay * ||W||^2``; returns (objective, grad_W, ce, logits)."""
    z = features @ w
    ce, gz = softmax_ce(z, b)
    obj = ce + weight_decay * float(np.sum(w * w))
    grad = features.T @ gz + 2.0 * weight_decay * w
    return obj, grad, ce, z


def init_weights(d: int, n_classes: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(d, n_classes)) / np.sqrt(max(d, 1))


def train_linear(features_fit, b_fit, cfg: TrainConfig = TrainConfig(),
                 eval_hook: Callable[[np.ndarray], float] | None = None):
    """Plain gradient descent on the regularized cross entropy.

    ``eval_hook(W)`` (optional) returns the test accuracy logged per epoch.
    Returns ``(W, TrainTrace)``.
    """
    f = np.asarray(features_fit, dtype=np.float64)
    b = np.asarray(b_fit, dtype=np.float64)
    if f.ndim != 2 or b.ndim != 2 or f.shape[0] != b.shape[0]:
        raise ValueError(f"shape mismatch: features {f.shape}, labels {b.shape}")
    y = b.argmax(axis=1)
    w = init_weights(f.shape[1], b.shape[1], cfg.seed)
    trace = TrainTrace()
    for epoch in range(cfg.epochs + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            z = f @ w
            penalty = cfg.weight_decay * float(np.sum(w * w))
        if not (np.all(np.isfinite(z)) and np.isfinite(penalty)):
            raise TrainingDiverged(epoch, float("inf"))
        ce, gz = softmax_ce(z, b)
        obj = ce + penalty
        grad = f.T @ gz + 2.0 * cfg.weight_decay * w
        trace.records.append(TraceRecord(
            epoch=epoch,
            loss=ce,
            objective=obj,
            train_accuracy=float(np.mean(argmax_rows(z) == y)),
            test_accuracy=None if eval_hook is None else float(eval_hook(w)),
        ))
        if epoch < cfg.epochs:
            with np.errstate(over="ignore", invalid="ignore"):
                w = w - cfg.learning_rate * grad
            if not np.all(np.isfinite(w)):
                raise TrainingDiverged(epoch + 1, float("nan"))
    return w, trace


def _test_hook(ds, features):
    if ds.labels.test is None:
        return None
    test = np.flatnonzero(ds.labels.test)
    ft, yt = features[test], ds.labels.y[test]
    return lambda w: np.mean(argmax_rows(ft @ w) == yt)


def train_sgc(ds, hops: int = 2, cfg: TrainConfig = TrainConfig(), use_val_labels: bool = False,
              cache: FeatureCache | None = None, track_test: bool = True):
    """Precompute ``A_norm^hops X`` and train a linear layer on the fit rows."""
    cache = cache or FeatureCache(ds)
    h = cache.get(hops)
    fit = np.flatnonzero(ds.labels.fit_mask(use_val_labels))
    hook = _test_hook(ds, h) if track_test else None
    return train_linear(h[fit], ds.labels.onehot[fit], cfg, hook)


def train_pipeline(ds, backbone: str = "sgc", hops: int = 2, cfg: TrainConfig = TrainConfig(),
                   use_val_labels: bool = False, cs_params: CSParams = CSParams(),
                   cache: FeatureCache | None = None):
    """Trained counterpart of :func:`trainless.fit.fit_pipeline`; returns ``(W, logits, trace)``.

    ``linear`` is logistic regression on raw attributes, ``sgc`` trains on
    ``hops``-step propagated attributes and ``cs`` post-processes the
    logistic-regression logits with Correct & Smooth.
    """
    if backbone not in BACKBONES:
        raise ValueError(f"backbone must be one of {BACKBONES}, got {backbone!r}")
    cache = cache or FeatureCache(ds)
    steps = hops if backbone == "sgc" else 0
    w, trace = train_sgc(ds, steps, cfg, use_val_labels, cache=cache, track_test=False)
    if backbone == "cs":
        mask = ds.labels.fit_mask(use_val_labels)
        z = predict_cs(cache.get(0), w, ds.graph, ds.labels, mask, cs_params)
    else:
        z = cache.get(steps) @ w
    return w, z, trace


def _acc(z, labels, mask) -> float:
    idx = np.flatnonzero(mask)
    return float(np.mean(argmax_rows(z[idx]) == labels.y[idx]))


def tune_trained(ds, backbone: str = "sgc", hops: int = 2, learning_rates=(0.05, 0.2, 0.5),
                 weight_decays=(0.0, 5e-4), epochs: int = 100, seed: int = 0,
                 use_val_labels: bool = False, cache: FeatureCache | None = None) -> dict:
    """Grid over learning rate and weight decay, selected on validation accuracy (ties: first)."""
    cache = cache or FeatureCache(ds)
    labels = ds.labels
    runs = []
    for lr, wd in itertools.product(learning_rates, weight_decays):
        cfg = TrainConfig(learning_rate=lr, epochs=epochs, weight_decay=wd, seed=seed)
        _, z, trace = train_pipeline(ds, backbone, hops, cfg, use_val_labels, cache=cache)
        runs.append({
            "learning_rate": lr,
            "weight_decay": wd,
            "final_loss": trace[-1].loss,
            "train_accuracy": _acc(z, labels, labels.mask("train")),
            "val_accuracy": _acc(z, labels, labels.mask("val")),
            "test_accuracy": _acc(z, labels, labels.mask("test")),
        })
    best = max(range(len(runs)), key=lambda i: (runs[i]["val_accuracy"], -i))
    return {"runs": runs, "selected": best, "best": runs[best]}


@dataclass
class LandscapeReport:
    trace: TrainTrace
    trainless_loss: float
    trainless_train_accuracy: float
    trainless_test_accuracy: Optional[float]
    fit_config: dict = field(default_factory=dict)
    train_config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "trace": self.trace.to_dict(),
            "trainless": {
                "loss": self.trainless_loss,
                "train_accuracy": self.trainless_train_accuracy,
                "test_accuracy": self.trainless_test_accuracy,
            },
            "fit_config": self.fit_config,
            "train_config": self.train_config,
        }


def landscape_compare(ds, hops: int = 2, cfg: TrainConfig = TrainConfig(),
                      fit_cfg: FitConfig | None = None, use_val_labels: bool = False) -> LandscapeReport:
    """Trained SGC trajectory next to the trainless SGC point.

    The trainless point's loss is the cross entropy of its logits on the
    fit rows, the same quantity recorded in the trace.
    """
    fit_cfg = fit_cfg or FitConfig(hops=hops)
    if fit_cfg.hops != hops:
        raise ValueError("fit_cfg.hops must equal the propagation depth being compared")
    cache = FeatureCache(ds)
    _, trace = train_sgc(ds, hops, cfg, use_val_labels, cache=cache)
    _, z = fit_pipeline(ds, fit_cfg, "sgc", use_val_labels, cache=cache)
    labels = ds.labels
    fit = labels.fit_mask(use_val_labels)
    loss, _ = softmax_ce(z[fit], labels.onehot[fit])
    test_acc = _acc(z, labels, labels.test) if labels.test is not None else None
    return LandscapeReport(
        trace=trace,
        trainless_loss=loss,
        trainless_train_accuracy=_acc(z, labels, fit),
        trainless_test_accuracy=test_acc,
        fit_config={"omega": fit_cfg.omega, "norm": fit_cfg.norm, "hops": fit_cfg.hops},
        train_config=asdict(cfg),
    )
