"""Datasets: the on-disk directory format, synthetic BOW graphs and splits.

A dataset directory holds ``meta.json``, ``edges.txt``, ``features.txt``,
``labels.txt`` and optionally ``split.txt``. All text files are UTF-8, one
record per line, with ``#`` starting a comment.
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .graph import Graph, build_graph
from .labels import SPLIT_NAMES, UNLABELED, LabelSet, make_split
from .sparse import SparseMatrix, sp_from_coo

__all__ = [
    "Dataset",
    "DatasetError",
    "SynthConfig",
    "load_dataset",
    "save_dataset",
    "write_split",
    "synth_qo",
    "make_split",
    "atomic_write_text",
    "atomic_write_bytes",
]

REQUIRED_FILES = ("meta.json", "edges.txt", "features.txt", "labels.txt")


class DatasetError(ValueError):
    """Malformed or inconsistent dataset input."""


@dataclass(frozen=True, eq=False)
class Dataset:
    graph: Graph
    x: SparseMatrix
    labels: LabelSet
    name: str = "dataset"

    def __post_init__(self):
        if not (self.x.n_rows == self.graph.n == self.labels.n):
            raise DatasetError(
                f"node counts disagree: graph {self.graph.n}, features {self.x.n_rows}, labels {self.labels.n}"
            )
        if self.labels.train is not None:
            seen = np.unique(self.labels.y[self.labels.train])
            missing = sorted(set(range(self.labels.n_classes)) - set(seen.tolist()))
            if missing:
                raise DatasetError(f"classes {missing} have no training node")

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def d(self) -> int:
        return self.x.n_cols

    @property
    def n_classes(self) -> int:
        return self.labels.n_classes

    def with_split(self, train, val, test) -> "Dataset":
        return replace(self, labels=self.labels.with_split(train, val, test))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.name == other.name and self.graph == other.graph
                and self.x == other.x and self.labels == other.labels)

    __hash__ = None


@dataclass(frozen=True)
class SynthConfig:
    """Bag-of-words graph with one vocabulary block per class.

    Every node draws ``words_per_node`` distinct words from its class block,
    so attribute vectors of different classes have disjoint supports. Edges
    follow a two-level stochastic block model.
    """

    n: int = 300
    d: int = 600
    C: int = 3
    words_per_class: int = 200
    words_per_node: int = 10
    p_intra: float = 0.02
    p_inter: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.C < 1:
            raise ValueError("n, d and C must be positive")
        if self.C * self.words_per_class > self.d:
            raise ValueError(f"C * words_per_class = {self.C * self.words_per_class} exceeds d = {self.d}")
        if not 0 < self.words_per_node <= self.words_per_class:
            raise ValueError("need 0 < words_per_node <= words_per_class")
        if not 0.0 <= self.p_inter <= self.p_intra <= 1.0:
            raise ValueError("need 0 <= p_inter <= p_intra <= 1")


# ---------------------------------------------------------------- writing

def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _fmt(v: float) -> str:
    return repr(float(v))


def write_split(path, labels: LabelSet) -> None:
    lines = []
    for node in range(labels.n):
        for name in SPLIT_NAMES:
            m = getattr(labels, name)
            if m is not None and m[node]:
                lines.append(f"{node} {name}\n")
    atomic_write_text(path, "".join(lines))


def save_dataset(ds: Dataset, dir_path) -> Path:
    """Write ``ds`` in the directory format; output is byte-stable for equal datasets.

    The directory is assembled next to its destination and swapped in, so a
    failed save never leaves a half-written dataset behind.
    """
    dest = Path(dir_path)
    dest.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(dir=dest.parent, prefix=f".{dest.name}."))
    try:
        meta = {"n": ds.n, "d": ds.d, "c": ds.n_classes, "name": ds.name}
        (stage / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")

        edges = ds.graph.edge_list()
        (stage / "edges.txt").write_text("".join(f"{u} {v}\n" for u, v in edges.tolist()))

        x = ds.x
        feat_lines = []
        for i in range(x.n_rows):
            lo, hi = x.row_ptr[i], x.row_ptr[i + 1]
            if hi > lo:
                cells = " ".join(f"{c}:{_fmt(v)}" for c, v in zip(x.col_idx[lo:hi].tolist(), x.values[lo:hi].tolist()))
                feat_lines.append(f"{i} {cells}\n")
        (stage / "features.txt").write_text("".join(feat_lines))

        y = ds.labels.y
        (stage / "labels.txt").write_text("".join(f"{i} {y[i]}\n" for i in np.flatnonzero(y != UNLABELED)))

        if any(getattr(ds.labels, k) is not None for k in SPLIT_NAMES):
            write_split(stage / "split.txt", ds.labels)

        if dest.exists():
            old = dest.with_name(f".{dest.name}.old")
            if old.exists():
                shutil.rmtree(old)
            os.replace(dest, old)
            os.replace(stage, dest)
            shutil.rmtree(old)
        else:
            os.replace(stage, dest)
    except BaseException:
        if stage.exists():
            shutil.rmtree(stage)
        raise
    return dest


# ---------------------------------------------------------------- reading

def _records(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def _int(tok: str, path: Path, lineno: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise DatasetError(f"{path.name}:{lineno}: bad {what} {tok!r}") from None


def _node(tok, n, path, lineno) -> int:
    v = _int(tok, path, lineno, "node index")
    if not 0 <= v < n:
        raise DatasetError(f"{path.name}:{lineno}: node {v} out of range [0, {n})")
    return v


def load_dataset(dir_path) -> Dataset:
    """Read and validate a dataset directory."""
    root = Path(dir_path)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {root}")
    for name in REQUIRED_FILES:
        if not (root / name).is_file():
            raise FileNotFoundError(f"dataset is missing {name}: {root / name}")

    try:
        meta = json.loads((root / "meta.json").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"meta.json: {exc}") from None
    for key in ("n", "d", "c"):
        if not isinstance(meta.get(key), int) or meta[key] < (0 if key != "c" else 1):
            raise DatasetError(f"meta.json: field {key!r} must be a valid integer")
    n, d, c = meta["n"], meta["d"], meta["c"]
    name = str(meta.get("name", root.name))

    path = root / "edges.txt"
    edges = []
    for lineno, tok in _records(path):
        if len(tok) != 2:
            raise DatasetError(f"{path.name}:{lineno}: expected 'u v'")
        edges.append((_node(tok[0], n, path, lineno), _node(tok[1], n, path, lineno)))
    graph = build_graph(n, edges)

    path = root / "features.txt"
    rows, cols, vals = [], [], []
    for lineno, tok in _records(path):
        i = _node(tok[0], n, path, lineno)
        for cell in tok[1:]:
            col, sep, val = cell.partition(":")
            if not sep:
                raise DatasetError(f"{path.name}:{lineno}: expected col:value, got {cell!r}")
            j = _int(col, path, lineno, "column")
            if not 0 <= j < d:
                raise DatasetError(f"{path.name}:{lineno}: column {j} out of range [0, {d})")
            try:
                v = float(val)
            except ValueError:
                raise DatasetError(f"{path.name}:{lineno}: bad value {val!r}") from None
            if not np.isfinite(v):
                raise DatasetError(f"{path.name}:{lineno}: non-finite value {val!r}")
            rows.append(i)
            cols.append(j)
            vals.append(v)
    x = sp_from_coo(n, d, rows, cols, vals)

    path = root / "labels.txt"
    y = np.full(n, UNLABELED, dtype=np.int64)
    for lineno, tok in _records(path):
        if len(tok) != 2:
            raise DatasetError(f"{path.name}:{lineno}: expected 'node label'")
        i = _node(tok[0], n, path, lineno)
        lab = _int(tok[1], path, lineno, "label")
        if not 0 <= lab < c:
            raise DatasetError(f"{path.name}:{lineno}: label {lab} out of range [0, {c})")
        y[i] = lab

    masks = {k: None for k in SPLIT_NAMES}
    path = root / "split.txt"
    if path.is_file():
        seen = {k: np.zeros(n, dtype=bool) for k in SPLIT_NAMES}
        for lineno, tok in _records(path):
            if len(tok) != 2 or tok[1] not in SPLIT_NAMES:
                raise DatasetError(f"{path.name}:{lineno}: expected 'node train|val|test'")
            i = _node(tok[0], n, path, lineno)
            if y[i] == UNLABELED:
                raise DatasetError(f"{path.name}:{lineno}: node {i} is unlabeled")
            if any(seen[k][i] for k in SPLIT_NAMES if k != tok[1]):
                raise DatasetError(f"{path.name}:{lineno}: node {i} assigned to two splits")
            seen[tok[1]][i] = True
        masks = {k: (m if m.any() else None) for k, m in seen.items()}

    try:
        labels = LabelSet(y, c, **masks)
    except ValueError as exc:
        raise DatasetError(str(exc)) from None
    return Dataset(graph, x, labels, name)


# ---------------------------------------------------------------- synthesis

def _pair_from_index(k: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Decode row-major indices of the strict upper triangle of an m x m matrix."""
    # row i starts at offset i*(2m - i - 1)/2
    def offset(i):
        return i * (2 * m - i - 1) // 2

    b = 2 * m - 1
    i = ((b - np.sqrt(np.maximum(b * b - 8.0 * k, 0.0))) // 2).astype(np.int64)
    i = np.clip(i, 0, max(m - 2, 0))
    while True:
        hi = offset(i + 1) <= k
        lo = offset(i) > k
        if not (hi.any() or lo.any()):
            break
        i = i + hi - lo
    j = k - offset(i) + i + 1
    return i, j


def _sbm_edges(groups: list[np.ndarray], p_intra: float, p_inter: float, rng) -> np.ndarray:
    out = []
    for a, ga in enumerate(groups):
        for b in range(a, len(groups)):
            gb = groups[b]
            p = p_intra if a == b else p_inter
            total = len(ga) * (len(ga) - 1) // 2 if a == b else len(ga) * len(gb)
            if p <= 0 or total == 0:
                continue
            m = rng.binomial(total, p)
            if m == 0:
                continue
            k = np.sort(rng.choice(total, size=m, replace=False))
            if a == b:
                i, j = _pair_from_index(k, len(ga))
                out.append(np.stack([ga[i], ga[j]], axis=1))
            else:
                out.append(np.stack([ga[k // len(gb)], gb[k % len(gb)]], axis=1))
    if not out:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(out)


def synth_qo(cfg: SynthConfig, split: tuple[int, int] | None = None) -> Dataset:
    """Generate a quasi-orthogonal BOW graph; deterministic for a given seed.

    ``split=(per_class_train, per_class_val)`` additionally attaches a
    random split drawn from the same seed.
    """
    rng = np.random.default_rng(cfg.seed)
    y = rng.permutation(np.arange(cfg.n) % cfg.C)

    # words_per_node distinct positions per row: first k of a random ranking
    ranks = np.argsort(rng.random((cfg.n, cfg.words_per_class)), axis=1)[:, : cfg.words_per_node]
    cols = ranks + (y * cfg.words_per_class)[:, None]
    rows = np.repeat(np.arange(cfg.n), cfg.words_per_node)
    x = sp_from_coo(cfg.n, cfg.d, rows, cols.ravel(), np.ones(rows.size))

    groups = [np.flatnonzero(y == c) for c in range(cfg.C)]
    graph = build_graph(cfg.n, _sbm_edges(groups, cfg.p_intra, cfg.p_inter, rng))

    labels = LabelSet(y, cfg.C)
    if split is not None:
        labels = labels.with_split(*make_split(labels, split[0], split[1], seed=cfg.seed))
    return Dataset(graph, x, labels, name=f"synth_qo-seed{cfg.seed}")
