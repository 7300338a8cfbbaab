"""Closed-form weight construction for linear graph models.

Each class gets a virtual label node wired to every labeled node: weight 1
to nodes of its own class, weight ``omega`` spread as ``-omega/C`` over every
labeled node. One round of message passing into the virtual nodes yields the
weight vectors, i.e. ``W = F^T diag(r) (B - omega/C)`` where ``F`` holds the
(optionally propagated) attributes of the labeled nodes and ``r`` is a
per-node degree weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .graph import CSParams, Graph, cs_apply, normalized_adjacency, sgc_propagate
from .labels import LabelSet
from .sparse import spmm_dense

__all__ = [
    "FitConfig",
    "LabelSet",
    "FeatureCache",
    "RankDeficientError",
    "degree_norm_vector",
    "fit_trainless",
    "min_norm_oracle",
    "predict_linear",
    "predict_sgc",
    "predict_cs",
    "fit_pipeline",
    "BACKBONES",
    "NORM_KINDS",
]

NormKind = Literal["cn", "aa", "ra"]
Backbone = Literal["linear", "sgc", "cs"]
NORM_KINDS = ("cn", "aa", "ra")
BACKBONES = ("linear", "sgc", "cs")


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class FitConfig:
    omega: float = 0.0
    norm: NormKind = "cn"
    hops: int = 0
    cs: CSParams = field(default_factory=CSParams)

    def __post_init__(self):
        object.__setattr__(self, "norm", str(self.norm).lower())
        if self.norm not in NORM_KINDS:
            raise ValueError(f"norm must be one of {NORM_KINDS}, got {self.norm!r}")
        if self.hops < 0:
            raise ValueError("hops must be nonnegative")
        if not np.isfinite(self.omega):
            raise ValueError("omega must be finite")


def degree_norm_vector(g: Graph, kind: NormKind, nodes=None) -> np.ndarray:
    """Per-node message weights from degrees of ``A + I``.

    ``cn`` is uniform, ``ra`` is ``1/deg`` and ``aa`` is ``1/log(deg)`` with
    the log clamped below at ``log 2`` so degree-1 nodes stay finite.
    """
    kind = str(kind).lower()
    if kind not in NORM_KINDS:
        raise ValueError(f"unknown degree normalization {kind!r}")
    nodes = np.arange(g.n) if nodes is None else np.asarray(nodes, dtype=np.int64)
    if len(nodes) and (nodes.min() < 0 or nodes.max() >= g.n):
        raise IndexError("node index out of range")
    deg = g.degrees[nodes].astype(np.float64) + 1.0
    if kind == "cn":
        return np.ones(len(nodes))
    if kind == "ra":
        return 1.0 / deg
    return 1.0 / np.maximum(np.log(deg), np.log(2.0))


def fit_trainless(features_labeled, b_labeled, r_labeled=None, omega: float = 0.0) -> np.ndarray:
    """Weight matrix ``F^T diag(r) (B - omega/C)``, shape ``d x C``.

    With ``r = 1`` and ``omega = 0`` this is just ``F^T B``: each class's
    weight vector is the sum of its labeled nodes' attributes.
    """
    f = np.asarray(features_labeled, dtype=np.float64)
    b = np.asarray(b_labeled, dtype=np.float64)
    if f.ndim != 2 or b.ndim != 2:
        raise ValueError("features and labels must be 2-D")
    if f.shape[0] != b.shape[0]:
        raise ValueError(f"{f.shape[0]} feature rows but {b.shape[0]} label rows")
    if f.shape[0] == 0:
        raise ValueError("need at least one labeled node")
    n_classes = b.shape[1]
    if n_classes == 0:
        raise ValueError("need at least one class")
    targets = b - omega / n_classes
    if r_labeled is not None:
        r = np.asarray(r_labeled, dtype=np.float64).ravel()
        if len(r) != f.shape[0]:
            raise ValueError(f"degree weights have length {len(r)}, expected {f.shape[0]}")
        targets = targets * r[:, None]
    return f.T @ targets


def min_norm_oracle(features_labeled, b_labeled) -> np.ndarray:
    """Minimum-Frobenius-norm ``W`` solving ``F W = B`` via the Gram system."""
    f = np.asarray(features_labeled, dtype=np.float64)
    b = np.asarray(b_labeled, dtype=np.float64)
    if f.ndim != 2 or b.ndim != 2 or f.shape[0] != b.shape[0]:
        raise ValueError(f"shape mismatch: features {f.shape}, labels {b.shape}")
    n_lab, d = f.shape
    if n_lab > d:
        raise RankDeficientError(f"{n_lab} labeled rows exceed dimension {d}; no exact interpolant in general")
    rank = np.linalg.matrix_rank(f)
    if rank < n_lab:
        raise RankDeficientError(f"Gram matrix is singular: feature rank {rank} < {n_lab} labeled rows")
    gram = f @ f.T
    return f.T @ np.linalg.solve(gram, b)


def _check_w(x: np.ndarray, w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(f"dimension mismatch: {x.shape} @ {w.shape}")
    return w


def predict_linear(x, w) -> np.ndarray:
    """Logits ``X W``; ``x`` may be dense or a :class:`SparseMatrix`."""
    if hasattr(x, "row_ptr"):
        w = np.asarray(w, dtype=np.float64)
        if w.ndim != 2 or x.n_cols != w.shape[0]:
            raise ValueError(f"dimension mismatch: {x.shape} @ {w.shape}")
        return spmm_dense(x, w)
    x = np.asarray(x, dtype=np.float64)
    return x @ _check_w(x, w)


def predict_sgc(h, w) -> np.ndarray:
    """Logits from already propagated attributes ``H``."""
    return predict_linear(h, w)


def predict_cs(x, w, g: Graph, labels: LabelSet, fit_mask, params: CSParams = CSParams()) -> np.ndarray:
    return cs_apply(predict_linear(x, w), g, labels.onehot, fit_mask, params)


class FeatureCache:
    """Dense attributes of a dataset and their SGC propagations, computed once per hop count."""

    def __init__(self, ds):
        self.ds = ds
        self._h: dict[int, np.ndarray] = {}
        self._a = None

    @property
    def a_norm(self):
        if self._a is None:
            self._a = normalized_adjacency(self.ds.graph, "with_self_loops")
        return self._a

    def get(self, hops: int) -> np.ndarray:
        if hops not in self._h:
            if hops == 0:
                self._h[0] = self.ds.x.toarray()
            else:
                # reuse the deepest cached propagation not exceeding ``hops``
                base = max(k for k in [0, *self._h] if k < hops)
                self._h[hops] = sgc_propagate(self.a_norm, self.get(base), hops - base)
        return self._h[hops]


def fit_pipeline(ds, cfg: FitConfig = FitConfig(), backbone: Backbone = "sgc",
                 use_val_labels: bool = False, cache: FeatureCache | None = None):
    """Fit the trainless weights for one backbone and score every node.

    The labeled attributes used for fitting are propagated ``cfg.hops``
    times over the original graph (no virtual nodes) when ``hops > 0``.
    ``linear`` and ``cs`` infer from raw attributes, ``sgc`` from the same
    propagation used for fitting. Returns ``(W, logits)``.
    """
    if backbone not in BACKBONES:
        raise ValueError(f"backbone must be one of {BACKBONES}, got {backbone!r}")
    labels = ds.labels
    fit_mask = labels.fit_mask(use_val_labels)
    fit_nodes = np.flatnonzero(fit_mask)
    if len(fit_nodes) == 0:
        raise ValueError("the fit set is empty")
    cache = cache or FeatureCache(ds)

    h = cache.get(cfg.hops)
    r = degree_norm_vector(ds.graph, cfg.norm, fit_nodes)
    w = fit_trainless(h[fit_nodes], labels.onehot[fit_nodes], r, cfg.omega)

    if backbone == "sgc":
        z = predict_sgc(h, w)
    elif backbone == "linear":
        z = predict_linear(cache.get(0), w)
    else:
        z = predict_cs(cache.get(0), w, ds.graph, labels, fit_mask, cfg.cs)
    return w, z
