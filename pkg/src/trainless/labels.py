"""Node labels, one-hot targets and train/val/test masks."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

UNLABELED = -1
SPLIT_NAMES = ("train", "val", "test")


class MissingMaskError(ValueError):
    pass


def _mask(m, n: int, name: str) -> np.ndarray | None:
    if m is None:
        return None
    m = np.asarray(m, dtype=bool)
    if m.shape != (n,):
        raise ValueError(f"{name} mask must have length {n}")
    if not m.any():
        # an empty mask carries no information; treat it like an absent one
        return None
    m = m.copy()
    m.flags.writeable = False
    return m


@dataclass(frozen=True, eq=False)
class LabelSet:
    """Class index per node (``-1`` for unlabeled) plus optional split masks."""

    y: np.ndarray
    n_classes: int
    train: np.ndarray | None = None
    val: np.ndarray | None = None
    test: np.ndarray | None = None

    def __post_init__(self):
        y = np.array(self.y, dtype=np.int64)
        if y.ndim != 1:
            raise ValueError("labels must be a vector")
        if self.n_classes < 1:
            raise ValueError("need at least one class")
        if np.any(y < UNLABELED) or np.any(y >= self.n_classes):
            bad = y[(y < UNLABELED) | (y >= self.n_classes)][0]
            raise ValueError(f"label {bad} outside [0, {self.n_classes})")
        y.flags.writeable = False
        object.__setattr__(self, "y", y)
        n = len(y)
        masks = {k: _mask(getattr(self, k), n, k) for k in SPLIT_NAMES}
        present = [m for m in masks.values() if m is not None]
        for m in present:
            if np.any(m & (y == UNLABELED)):
                raise ValueError("masks may only contain labeled nodes")
        total = sum(m.astype(int) for m in present) if present else 0
        if present and np.any(total > 1):
            raise ValueError("train/val/test masks overlap")
        for k, m in masks.items():
            object.__setattr__(self, k, m)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def labeled(self) -> np.ndarray:
        return self.y != UNLABELED

    @property
    def has_split(self) -> bool:
        return self.train is not None

    @property
    def onehot(self) -> np.ndarray:
        """``n x C`` one-hot matrix; unlabeled rows are zero."""
        b = np.zeros((self.n, self.n_classes))
        lab = np.flatnonzero(self.labeled)
        b[lab, self.y[lab]] = 1.0
        return b

    B = onehot

    def mask(self, name: str) -> np.ndarray:
        if name not in SPLIT_NAMES:
            raise ValueError(f"unknown mask {name!r}")
        m = getattr(self, name)
        if m is None:
            raise MissingMaskError(f"dataset has no {name} mask")
        return m

    def fit_mask(self, use_val_labels: bool = False) -> np.ndarray:
        m = self.mask("train")
        if use_val_labels:
            m = m | self.mask("val")
        return m

    def with_split(self, train, val, test) -> "LabelSet":
        return replace(self, train=train, val=val, test=test)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelSet):
            return NotImplemented
        if self.n_classes != other.n_classes or not np.array_equal(self.y, other.y):
            return False
        for k in SPLIT_NAMES:
            a, b = getattr(self, k), getattr(other, k)
            if (a is None) != (b is None) or (a is not None and not np.array_equal(a, b)):
                return False
        return True

    __hash__ = None


def make_split(labels: LabelSet, per_class_train: int = 20, per_class_val: int = 30,
               seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample a fixed number of train/val nodes per class; the rest is test.

    Sampling is uniform without replacement inside each class and depends
    only on ``seed``.
    """
    if per_class_train < 0 or per_class_val < 0:
        raise ValueError("per-class counts must be nonnegative")
    rng = np.random.default_rng(seed)
    n = labels.n
    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    for c in range(labels.n_classes):
        members = np.flatnonzero(labels.y == c)
        need = per_class_train + per_class_val
        if len(members) < need:
            raise ValueError(f"class {c} has {len(members)} labeled nodes, needs {need}")
        picked = rng.permutation(members)
        train[picked[:per_class_train]] = True
        val[picked[per_class_train:need]] = True
    test = labels.labeled & ~train & ~val
    return train, val, test
