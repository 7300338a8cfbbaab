#!/usr/bin/env python3
"""Convert a raw Planetoid release (``ind.<name>.*`` files) to the dataset directory format.

Usage:
    python scripts/convert_planetoid.py RAW_DIR NAME OUT_DIR [--row-normalize]

RAW_DIR holds the ``ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index}`` files
of the public release. The standard split is attached: the first ``len(y)``
nodes train, the next 500 validate, and ``test.index`` tests. Test indices
missing from the release (isolated Citeseer nodes) become zero-feature,
unlabeled nodes.
"""

from __future__ import annotations

import argparse
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from trainless.data import Dataset, save_dataset
from trainless.graph import build_graph
from trainless.labels import UNLABELED, LabelSet
from trainless.sparse import sp_from_coo

N_VAL = 500


def _load(raw: Path, name: str, part: str):
    with open(raw / f"ind.{name}.{part}", "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def convert(raw_dir, name: str, row_normalize: bool = False) -> Dataset:
    raw = Path(raw_dir)
    x, y, tx, ty, allx, ally, graph = (_load(raw, name, p) for p in ("x", "y", "tx", "ty", "allx", "ally", "graph"))
    test_idx = np.array([int(v) for v in (raw / f"ind.{name}.test.index").read_text().split()], dtype=np.int64)
    test_sorted = np.sort(test_idx)

    span = test_sorted[-1] - test_sorted[0] + 1
    if span != len(test_idx):
        # pad the test block so every index in the range has a row
        tx_full = sp.lil_matrix((span, tx.shape[1]))
        tx_full[test_sorted - test_sorted[0], :] = tx
        ty_full = np.zeros((span, ty.shape[1]))
        ty_full[test_sorted - test_sorted[0], :] = ty
        tx, ty = tx_full, ty_full

    feats = sp.vstack([sp.csr_matrix(allx), sp.csr_matrix(tx)]).tolil()
    onehot = np.vstack([np.asarray(ally), np.asarray(ty)])
    # row k of the test block belongs to node test_idx[k]
    feats[test_idx, :] = feats[test_sorted, :]
    onehot[test_idx, :] = onehot[test_sorted, :]
    feats = feats.tocsr()

    n, c = feats.shape[0], onehot.shape[1]
    if row_normalize:
        s = np.asarray(feats.sum(axis=1)).ravel()
        feats = sp.diags(np.divide(1.0, s, out=np.zeros_like(s), where=s != 0)) @ feats
    coo = feats.tocoo()
    xm = sp_from_coo(n, feats.shape[1], coo.row, coo.col, coo.data)

    labels = np.where(onehot.sum(axis=1) > 0, onehot.argmax(axis=1), UNLABELED)
    edges = [(u, v) for u, nbrs in graph.items() for v in nbrs if u < n and v < n]
    g = build_graph(n, edges)

    train = np.zeros(n, dtype=bool)
    train[: len(y)] = True
    val = np.zeros(n, dtype=bool)
    val[len(y): len(y) + N_VAL] = True
    test = np.zeros(n, dtype=bool)
    test[test_idx] = True
    test &= labels != UNLABELED
    return Dataset(g, xm, LabelSet(labels, c, train=train, val=val, test=test), name=name)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("raw_dir")
    p.add_argument("name")
    p.add_argument("out_dir")
    p.add_argument("--row-normalize", action="store_true", help="scale each feature row to sum 1")
    args = p.parse_args(argv)
    ds = convert(args.raw_dir, args.name, args.row_normalize)
    save_dataset(ds, args.out_dir)
    print(f"{ds.name}: {ds.n} nodes, {ds.graph.n_edges} edges, d={ds.d}, C={ds.n_classes} -> {args.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
