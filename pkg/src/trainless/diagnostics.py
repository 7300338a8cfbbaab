"""Quasi-orthogonality statistics and weight-alignment heatmaps.

Heatmaps are exported as headerless CSV and as binary 8-bit PGM images with
per-matrix min-max scaling; the scaling bounds go to a ``.txt`` sidecar.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .data import atomic_write_bytes, atomic_write_text

EPS = 1e-12


@dataclass(frozen=True)
class QOReport:
    intra_mean: Optional[float]
    inter_mean: Optional[float]
    diag_mean: float
    qo_ratio: Optional[float]
    n_nodes: int
    n_intra_pairs: int
    n_inter_pairs: int
    normalized: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _rows(x, subset) -> np.ndarray:
    subset = np.asarray(subset, dtype=np.int64)
    if len(subset) == 0:
        raise ValueError("subset is empty")
    if hasattr(x, "take_rows"):
        return x.take_rows(subset)
    return np.asarray(x, dtype=np.float64)[subset]


def _unit_rows(f: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(f, axis=1, keepdims=True)
    return np.divide(f, norms, out=np.zeros_like(f), where=norms > 0)


def _labels_of(labels, subset) -> np.ndarray:
    y = labels.y if hasattr(labels, "y") else np.asarray(labels)
    y = np.asarray(y)[np.asarray(subset, dtype=np.int64)]
    if np.any(y < 0):
        raise ValueError("subset contains unlabeled nodes")
    return y


def class_order(y) -> np.ndarray:
    """Stable permutation sorting positions by class."""
    return np.argsort(np.asarray(y), kind="stable")


def qo_stats(x, labels, subset, normalize: bool = True) -> QOReport:
    """Mean pairwise inner products within and across classes on ``subset``."""
    y = _labels_of(labels, subset)
    f = _rows(x, subset)
    if normalize:
        f = _unit_rows(f)
    g = f @ f.T
    same = y[:, None] == y[None, :]
    off = ~np.eye(len(y), dtype=bool)
    intra, inter = same & off, ~same
    n_intra, n_inter = int(intra.sum()) // 2, int(inter.sum()) // 2
    intra_mean = float(g[intra].mean()) if n_intra else None
    inter_mean = float(g[inter].mean()) if n_inter else None
    ratio = None
    if intra_mean is not None and inter_mean is not None:
        ratio = intra_mean / max(abs(inter_mean), EPS)
    return QOReport(intra_mean, inter_mean, float(np.diag(g).mean()), ratio,
                    len(y), n_intra, n_inter, bool(normalize))


def gram_heatmap(x, labels, subset, normalize: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Gram matrix of the subset with rows/columns grouped by class.

    Returns ``(gram, nodes)`` where ``nodes`` lists the node ids in display order.
    """
    subset = np.asarray(subset, dtype=np.int64)
    y = _labels_of(labels, subset)
    nodes = subset[class_order(y)]
    f = _rows(x, nodes)
    if normalize:
        f = _unit_rows(f)
    return f @ f.T, nodes


def alignment_heatmap(w, x_labeled, y_labeled) -> np.ndarray:
    """``C x l`` matrix of ``<x_i, W[:, c]>`` with columns grouped by class."""
    w = np.asarray(w, dtype=np.float64)
    f = x_labeled.toarray() if hasattr(x_labeled, "toarray") else np.asarray(x_labeled, dtype=np.float64)
    y = np.asarray(y_labeled)
    if w.ndim != 2 or f.ndim != 2 or f.shape[1] != w.shape[0]:
        raise ValueError(f"dimension mismatch: attributes {f.shape}, weights {w.shape}")
    if len(y) != f.shape[0]:
        raise ValueError("one label per attribute row is required")
    return (f[class_order(y)] @ w).T


def write_csv(path, m) -> None:
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    text = "".join(",".join(repr(float(v)) for v in row) + "\n" for row in m)
    atomic_write_text(path, text)


def read_csv(path) -> np.ndarray:
    rows = [[float(v) for v in line.split(",")] for line in Path(path).read_text().splitlines() if line]
    return np.array(rows, dtype=np.float64)


def to_pgm(m) -> tuple[bytes, float, float]:
    """Encode ``m`` as binary PGM; returns ``(data, lo, hi)`` of the linear scaling."""
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    lo, hi = float(m.min()), float(m.max())
    if hi > lo:
        px = np.rint((m - lo) / (hi - lo) * 255.0)
    else:
        px = np.zeros_like(m)
    header = f"P5\n{m.shape[1]} {m.shape[0]}\n255\n".encode("ascii")
    return header + px.astype(np.uint8).tobytes(), lo, hi


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    # header lines are newline-terminated; pixel bytes may themselves look like whitespace
    magic, dims, maxval, rest = data.split(b"\n", 3)
    w, h = dims.split()
    if magic != b"P5" or int(maxval) != 255:
        raise ValueError("not an 8-bit binary PGM")
    return np.frombuffer(rest, dtype=np.uint8).reshape(int(h), int(w))


def write_pgm(path, m) -> None:
    data, lo, hi = to_pgm(m)
    atomic_write_bytes(path, data)
    atomic_write_text(
        f"{path}.txt",
        f"scaling: linear min-max to 0..255\nmin: {lo!r}\nmax: {hi!r}\n",
    )


def export_heatmap(stem, m) -> list[Path]:
    """Write ``stem.csv``, ``stem.pgm`` and ``stem.pgm.txt``."""
    stem = Path(stem)
    csv, pgm = stem.with_name(stem.name + ".csv"), stem.with_name(stem.name + ".pgm")
    write_csv(csv, m)
    write_pgm(pgm, m)
    return [csv, pgm, Path(f"{pgm}.txt")]
