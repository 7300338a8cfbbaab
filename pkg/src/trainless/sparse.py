"""Compressed-sparse-row matrices and the handful of kernels the pipeline needs.

Dense matrices are plain ``numpy.ndarray`` objects of dtype float64. The CSR
type is kept canonical (sorted columns, no duplicates, no stored zeros) so
that two matrices with the same entries compare equal structurally.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sps

__all__ = [
    "SparseMatrix",
    "sp_from_triplets",
    "sp_from_coo",
    "sp_from_dense",
    "sp_identity",
    "spmm_dense",
    "sp_transpose",
    "row_scale",
    "col_scale",
    "dense_matmul",
    "dense_add",
    "dense_scale",
    "argmax_rows",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Immutable CSR matrix of float64 values."""

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_ptr", _frozen(np.asarray(self.row_ptr, dtype=np.int64)))
        object.__setattr__(self, "col_idx", _frozen(np.asarray(self.col_idx, dtype=np.int64)))
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=np.float64)))
        if self.row_ptr.shape != (self.n_rows + 1,):
            raise ValueError("row_ptr must have length n_rows + 1")
        if self.row_ptr[0] != 0 or self.row_ptr[-1] != len(self.values) or len(self.col_idx) != len(self.values):
            raise ValueError("row_ptr endpoints do not match the stored entries")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must be nondecreasing")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def row_indices(self) -> np.ndarray:
        """Row index of every stored entry (COO row array)."""
        return np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.row_ptr))

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def triplets(self) -> list[tuple[int, int, float]]:
        return list(zip(self.row_indices().tolist(), self.col_idx.tolist(), self.values.tolist()))

    def toarray(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_indices(), self.col_idx] = self.values
        return out

    def to_scipy(self) -> sps.csr_matrix:
        return sps.csr_matrix((self.values, self.col_idx, self.row_ptr), shape=self.shape)

    def take_rows(self, rows: Sequence[int]) -> np.ndarray:
        """Dense copy of the selected rows."""
        rows = np.asarray(rows, dtype=np.int64)
        return self.to_scipy()[rows].toarray()

    @property
    def T(self) -> "SparseMatrix":
        return sp_transpose(self)

    def __matmul__(self, other):
        return spmm_dense(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


def _from_coo(n_rows: int, n_cols: int, rows, cols, vals) -> SparseMatrix:
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=np.float64).ravel()
    if not (len(rows) == len(cols) == len(vals)):
        raise ValueError("row, column and value arrays differ in length")
    if n_rows < 0 or n_cols < 0:
        raise ValueError("matrix dimensions must be nonnegative")
    if len(rows):
        bad = (rows < 0) | (rows >= n_rows) | (cols < 0) | (cols >= n_cols)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise IndexError(f"entry ({rows[k]}, {cols[k]}) out of range for a {n_rows}x{n_cols} matrix")
    if not np.all(np.isfinite(vals)):
        raise ValueError("sparse matrix values must be finite")

    # duplicates are summed in value order so the result ignores input order
    order = np.lexsort((vals, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if len(rows):
        start = np.ones(len(rows), dtype=bool)
        start[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        heads = np.flatnonzero(start)
        vals = np.add.reduceat(vals, heads)
        rows, cols = rows[heads], cols[heads]
        if not np.all(np.isfinite(vals)):
            raise ValueError("summing duplicate entries overflowed")
        keep = vals != 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=row_ptr[1:])
    return SparseMatrix(n_rows, n_cols, row_ptr, cols, vals)


def sp_from_triplets(n_rows: int, n_cols: int, entries: Iterable[tuple[int, int, float]]) -> SparseMatrix:
    """Build a canonical CSR matrix from ``(row, col, value)`` triplets.

    Duplicate positions are summed and zeros (explicit or produced by the
    summation) are dropped.

    >>> sp_from_triplets(2, 2, [(0, 0, 1.0), (0, 0, 2.0)]).triplets()
    [(0, 0, 3.0)]
    """
    entries = list(entries)
    if not entries:
        return _from_coo(n_rows, n_cols, [], [], [])
    rows, cols, vals = zip(*entries)
    for r, c in zip(rows, cols):
        if int(r) != r or int(c) != c:
            raise ValueError(f"non-integer index ({r}, {c})")
    return _from_coo(n_rows, n_cols, rows, cols, vals)


def sp_from_coo(n_rows: int, n_cols: int, rows, cols, vals) -> SparseMatrix:
    """Array form of :func:`sp_from_triplets`."""
    return _from_coo(n_rows, n_cols, rows, cols, vals)


def sp_from_dense(a) -> SparseMatrix:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("expected a 2-D array")
    r, c = np.nonzero(a)
    return _from_coo(a.shape[0], a.shape[1], r, c, a[r, c])


def sp_identity(n: int) -> SparseMatrix:
    idx = np.arange(n)
    return SparseMatrix(n, n, np.arange(n + 1), idx, np.ones(n))


def _as_dense(b, name="operand") -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {b.shape}")
    return b


def spmm_dense(a: SparseMatrix, b) -> np.ndarray:
    """Sparse times dense product ``a @ b``."""
    b = _as_dense(b)
    if a.n_cols != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    if a.nnz == 0:
        return np.zeros((a.n_rows, b.shape[1]))
    # scipy's csr kernel accumulates each row in stored column order: deterministic
    return np.asarray(a.to_scipy() @ b)


def sp_transpose(a: SparseMatrix) -> SparseMatrix:
    rows = a.row_indices()
    # stable sort by column keeps the row order inside each new row ascending
    order = np.argsort(a.col_idx, kind="stable")
    new_ptr = np.zeros(a.n_cols + 1, dtype=np.int64)
    np.cumsum(np.bincount(a.col_idx, minlength=a.n_cols), out=new_ptr[1:])
    return SparseMatrix(a.n_cols, a.n_rows, new_ptr, rows[order], a.values[order])


def _check_scale(s, n: int, what: str) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64).ravel()
    if len(s) != n:
        raise ValueError(f"scale vector has length {len(s)}, expected {n} ({what})")
    if not np.all(np.isfinite(s)):
        raise ValueError("scale vector must be finite")
    return s


def row_scale(a: SparseMatrix, s) -> SparseMatrix:
    """``diag(s) @ a``; rows scaled by zero lose their entries."""
    s = _check_scale(s, a.n_rows, "rows")
    return _from_coo(a.n_rows, a.n_cols, a.row_indices(), a.col_idx, a.values * s[a.row_indices()])


def col_scale(a: SparseMatrix, s) -> SparseMatrix:
    """``a @ diag(s)``."""
    s = _check_scale(s, a.n_cols, "columns")
    return _from_coo(a.n_rows, a.n_cols, a.row_indices(), a.col_idx, a.values * s[a.col_idx])


def dense_matmul(a, b) -> np.ndarray:
    a, b = _as_dense(a, "left operand"), _as_dense(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


def dense_add(a, b) -> np.ndarray:
    a, b = _as_dense(a, "left operand"), _as_dense(b, "right operand")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} + {b.shape}")
    return a + b


def dense_scale(a, c: float) -> np.ndarray:
    return _as_dense(a) * float(c)


def argmax_rows(z) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest column index."""
    z = _as_dense(z, "logits")
    if z.shape[1] == 0:
        raise ValueError("cannot take argmax over zero columns")
    return np.argmax(z, axis=1)
