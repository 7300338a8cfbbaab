"""Graph structure, adjacency normalizations and propagation schemes.

Covers SGC feature propagation, the two Correct & Smooth post-processing
recursions and label propagation (smoothing of zero logits with clamping).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .sparse import SparseMatrix, col_scale, row_scale, sp_from_coo, spmm_dense

__all__ = [
    "Graph",
    "PropagationConfig",
    "CSParams",
    "build_graph",
    "normalized_adjacency",
    "sgc_propagate",
    "cs_correct",
    "cs_smooth",
    "cs_apply",
    "label_propagation",
]

Variant = Literal["with_self_loops", "plain"]
VARIANTS = ("with_self_loops", "plain")


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph stored as a symmetric 0/1 CSR adjacency."""

    n: int
    adj: SparseMatrix

    def __post_init__(self):
        if self.adj.shape != (self.n, self.n):
            raise ValueError(f"adjacency must be {self.n}x{self.n}, got {self.adj.shape}")

    @property
    def degrees(self) -> np.ndarray:
        return self.adj.row_nnz()

    @property
    def n_edges(self) -> int:
        """Number of undirected edges."""
        return self.adj.nnz // 2

    def edge_list(self) -> np.ndarray:
        """``(m, 2)`` array of edges with ``u < v``, sorted."""
        rows = self.adj.row_indices()
        keep = rows < self.adj.col_idx
        return np.stack([rows[keep], self.adj.col_idx[keep]], axis=1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and self.adj == other.adj

    __hash__ = None


@dataclass(frozen=True)
class PropagationConfig:
    hops: int = 2
    variant: Variant = "with_self_loops"

    def __post_init__(self):
        if self.hops < 0:
            raise ValueError("hops must be nonnegative")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass(frozen=True)
class CSParams:
    """Correct & Smooth settings. Defaults follow common C&S practice."""

    alpha1: float = 0.9
    alpha2: float = 0.9
    gamma: float = 1.0
    l1: int = 50
    l2: int = 50

    def __post_init__(self):
        for name in ("alpha1", "alpha2"):
            a = getattr(self, name)
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {a}")
        if self.l1 < 0 or self.l2 < 0:
            raise ValueError("iteration counts must be nonnegative")


def build_graph(n: int, edges) -> Graph:
    """Symmetrize, deduplicate and drop self-edges.

    >>> build_graph(3, [(0, 1)]).degrees.tolist()
    [1, 1, 0]
    """
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(e) and (e.min() < 0 or e.max() >= n):
        bad = e[((e < 0) | (e >= n)).any(axis=1)][0]
        raise IndexError(f"edge ({bad[0]}, {bad[1]}) out of range for {n} nodes")
    e = e[e[:, 0] != e[:, 1]]
    u = np.concatenate([e[:, 0], e[:, 1]])
    v = np.concatenate([e[:, 1], e[:, 0]])
    if len(u):
        # collapse duplicates before building so every stored weight is exactly 1
        key = np.unique(u * n + v)
        u, v = key // n, key % n
    return Graph(n, sp_from_coo(n, n, u, v, np.ones(len(u))))


def _inv_sqrt(deg: np.ndarray) -> np.ndarray:
    out = np.zeros(len(deg))
    nz = deg > 0
    out[nz] = 1.0 / np.sqrt(deg[nz])
    return out


def normalized_adjacency(g: Graph, variant: Variant = "with_self_loops") -> SparseMatrix:
    """Symmetric degree normalization ``D^-1/2 A D^-1/2``.

    ``with_self_loops`` normalizes ``A + I`` by its own degrees; ``plain``
    normalizes ``A`` and leaves isolated nodes as empty rows.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    a = g.adj
    deg = g.degrees.astype(np.float64)
    if variant == "with_self_loops":
        idx = np.arange(g.n)
        rows = np.concatenate([a.row_indices(), idx])
        cols = np.concatenate([a.col_idx, idx])
        a = sp_from_coo(g.n, g.n, rows, cols, np.ones(len(rows)))
        deg = deg + 1.0
    s = _inv_sqrt(deg)
    return col_scale(row_scale(a, s), s)


def sgc_propagate(a_norm: SparseMatrix, x, hops: int) -> np.ndarray:
    """Apply ``a_norm`` to ``x`` ``hops`` times."""
    x = np.asarray(x, dtype=np.float64)
    if hops < 0:
        raise ValueError("hops must be nonnegative")
    if a_norm.n_rows != a_norm.n_cols:
        raise ValueError("propagation matrix must be square")
    if x.ndim != 2 or a_norm.n_cols != x.shape[0]:
        raise ValueError(f"dimension mismatch: {a_norm.shape} @ {x.shape}")
    h = x.copy()
    for _ in range(hops):
        h = spmm_dense(a_norm, h)
    return h


def _check_logits(z, g: Graph, b, mask, name: str):
    z = np.asarray(z, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if z.ndim != 2 or z.shape[0] != g.n:
        raise ValueError(f"{name} must have {g.n} rows, got shape {z.shape}")
    if b.shape != z.shape:
        raise ValueError(f"label matrix shape {b.shape} does not match {name} shape {z.shape}")
    if mask.shape != (g.n,):
        raise ValueError(f"mask must have length {g.n}")
    return z, b, mask


def _mix(s: SparseMatrix, m: np.ndarray, alpha: float) -> np.ndarray:
    return alpha * spmm_dense(s, m) + (1.0 - alpha) * m


def cs_correct(z_hat, g: Graph, b, train_mask, alpha1: float, gamma: float, l1: int,
               s: SparseMatrix | None = None) -> np.ndarray:
    """Spread the residual ``B - Z_hat`` of labeled rows over the graph and add it back."""
    z_hat, b, mask = _check_logits(z_hat, g, b, train_mask, "z_hat")
    if s is None:
        s = normalized_adjacency(g, "plain")
    e = np.zeros_like(z_hat)
    e[mask] = b[mask] - z_hat[mask]
    for _ in range(l1):
        e = _mix(s, e, alpha1)
    return z_hat + gamma * e


def cs_smooth(z_prime, g: Graph, b, train_mask, alpha2: float, l2: int,
              s: SparseMatrix | None = None, clamp_each_step: bool = False) -> np.ndarray:
    """Clamp labeled rows to ``B`` and diffuse the scores ``l2`` times.

    With ``clamp_each_step`` the labeled rows are reset to ``B`` after every
    iteration (label propagation); otherwise only the starting point is clamped.
    """
    z, b, mask = _check_logits(z_prime, g, b, train_mask, "z_prime")
    if s is None:
        s = normalized_adjacency(g, "plain")
    z = z.copy()
    z[mask] = b[mask]
    for _ in range(l2):
        z = _mix(s, z, alpha2)
        if clamp_each_step:
            z[mask] = b[mask]
    return z


def cs_apply(z_hat, g: Graph, b, train_mask, params: CSParams = CSParams()) -> np.ndarray:
    s = normalized_adjacency(g, "plain")
    z_prime = cs_correct(z_hat, g, b, train_mask, params.alpha1, params.gamma, params.l1, s=s)
    return cs_smooth(z_prime, g, b, train_mask, params.alpha2, params.l2, s=s)


def label_propagation(g: Graph, b, train_mask, alpha: float = 0.9, iters: int = 50) -> np.ndarray:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2:
        raise ValueError("label matrix must be 2-D")
    return cs_smooth(np.zeros_like(b), g, b, train_mask, alpha, iters, clamp_each_step=True)
