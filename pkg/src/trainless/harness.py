"""Experiment commands behind the CLI: single fits, validation-selected sweeps,
timing benchmarks and diagnostics exports.

Every command returns a plain JSON-serializable dict that embeds its fully
resolved configuration. Wall-clock numbers are only included on request
(``timing=True``) or in :func:`run_bench`, so reports are byte-stable across
reruns.
"""

from __future__ import annotations

import itertools
import json
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import diagnostics
from .data import Dataset, atomic_write_text
from .fit import (BACKBONES, NORM_KINDS, FeatureCache, FitConfig, degree_norm_vector,
                  fit_pipeline, fit_trainless)
from .graph import CSParams
from .labels import MissingMaskError, make_split
from .sparse import argmax_rows
from .train import TrainConfig, train_linear, train_pipeline

DEFAULT_OMEGAS = (-1.0, 0.0, 0.001, 0.01, 0.1, 1.0)
DEFAULT_NORMS = NORM_KINDS
DEFAULT_HOPS = (0, 2)


def accuracy(z, labels, mask) -> float:
    """Fraction of masked rows whose argmax (lowest index on ties) equals the label."""
    y = labels.y if hasattr(labels, "y") else np.asarray(labels)
    idx = np.flatnonzero(np.asarray(mask, dtype=bool))
    if len(idx) == 0:
        raise ValueError("accuracy mask is empty")
    return float(np.mean(argmax_rows(np.asarray(z)[idx]) == y[idx]))


def worker_threads() -> int:
    raw = os.environ.get("TRAINLESS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"TRAINLESS_THREADS must be an integer, got {raw!r}") from None
    return max(n, 1)


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(path, report: dict) -> None:
    atomic_write_text(path, dumps(report))


def dataset_summary(ds: Dataset) -> dict:
    return {"name": ds.name, "n": ds.n, "d": ds.d, "classes": ds.n_classes, "edges": ds.graph.n_edges}


@dataclass(frozen=True)
class SweepGrid:
    omegas: tuple = DEFAULT_OMEGAS
    norm_kinds: tuple = DEFAULT_NORMS
    backbones: tuple = ("sgc",)
    hops: tuple = DEFAULT_HOPS

    def __post_init__(self):
        for name in ("omegas", "norm_kinds", "backbones", "hops"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"sweep grid field {name!r} is empty")
        for b in self.backbones:
            if b not in BACKBONES:
                raise ValueError(f"unknown backbone {b!r}")

    def points(self, cs: CSParams = CSParams()) -> list[tuple[str, FitConfig]]:
        """Grid order: backbone, hops, norm, omega (last varies fastest)."""
        return [(b, FitConfig(omega=float(o), norm=k, hops=int(h), cs=cs))
                for b, h, k, o in itertools.product(self.backbones, self.hops, self.norm_kinds, self.omegas)]


@dataclass(frozen=True)
class TrainedGrid:
    learning_rates: tuple = (0.05, 0.2, 0.5)
    weight_decays: tuple = (0.0, 5e-4)
    epochs: int = 100
    backbones: tuple = ("sgc",)
    hops: tuple = (2,)

    def points(self, seed: int = 0) -> list[tuple[str, int, TrainConfig]]:
        return [(b, int(h), TrainConfig(learning_rate=lr, epochs=self.epochs, weight_decay=wd, seed=seed))
                for b, h, lr, wd in itertools.product(self.backbones, self.hops,
                                                      self.learning_rates, self.weight_decays)]


def _fit_config_dict(backbone: str, cfg: FitConfig) -> dict:
    out = {"model": "trainless", "backbone": backbone, "omega": cfg.omega, "norm": cfg.norm, "hops": cfg.hops}
    if backbone == "cs":
        out["cs"] = asdict(cfg.cs)
    return out


def _train_config_dict(backbone: str, hops: int, cfg: TrainConfig, cs: CSParams) -> dict:
    out = {"model": "trained", "backbone": backbone, "hops": hops if backbone == "sgc" else 0, **asdict(cfg)}
    if backbone == "cs":
        out["cs"] = asdict(cs)
    return out


def _scores(z, labels) -> dict:
    out = {}
    for name in ("train", "val", "test"):
        m = getattr(labels, name)
        out[f"{name}_accuracy"] = accuracy(z, labels, m) if m is not None and m.any() else None
    return out


def resolve_splits(ds: Dataset, n_splits: int = 10, seed: int = 0,
                   per_class_train: int = 20, per_class_val: int = 30) -> list[tuple[dict, Dataset]]:
    """Fixed split when the dataset has one, otherwise ``n_splits`` seeded random splits."""
    if ds.labels.has_split:
        return [({"source": "fixed"}, ds)]
    if n_splits < 1:
        raise ValueError("need at least one split")
    out = []
    for k in range(n_splits):
        s = seed + k
        masks = make_split(ds.labels, per_class_train, per_class_val, seed=s)
        out.append(({"source": "random", "seed": s, "per_class_train": per_class_train,
                     "per_class_val": per_class_val}, ds.with_split(*masks)))
    return out


def _timed(fn, timing: bool):
    t0 = time.perf_counter()
    out = fn()
    return out, (time.perf_counter() - t0 if timing else None)


def evaluate_trainless(ds, backbone, cfg: FitConfig, use_val_labels=False, cache=None, timing=False):
    (w, z), secs = _timed(lambda: fit_pipeline(ds, cfg, backbone, use_val_labels, cache), timing)
    rec = {"config": _fit_config_dict(backbone, cfg), **_scores(z, ds.labels)}
    if timing:
        rec["fit_seconds"] = secs
    return rec, w, z


def evaluate_trained(ds, backbone, hops, cfg: TrainConfig, use_val_labels=False, cache=None,
                     timing=False, cs: CSParams = CSParams()):
    (w, z, _), secs = _timed(lambda: train_pipeline(ds, backbone, hops, cfg, use_val_labels, cs, cache), timing)
    rec = {"config": _train_config_dict(backbone, hops, cfg, cs), **_scores(z, ds.labels)}
    if timing:
        rec["fit_seconds"] = secs
    return rec, w, z


def run_fit(ds: Dataset, backbone: str = "sgc", cfg: FitConfig = FitConfig(), use_val_labels: bool = False,
            seed: int = 0, timing: bool = False, trained: TrainConfig | None = None):
    """One fit on one split. Returns ``(report, W, logits)``."""
    split_info, ds = resolve_splits(ds, 1, seed)[0]
    if use_val_labels and ds.labels.val is None:
        raise MissingMaskError("--use-val-labels requires a val mask, but the dataset has none")
    if trained is None:
        rec, w, z = evaluate_trainless(ds, backbone, cfg, use_val_labels, timing=timing)
    else:
        rec, w, z = evaluate_trained(ds, backbone, cfg.hops, trained, use_val_labels, timing=timing, cs=cfg.cs)
    report = {
        "command": "fit",
        "dataset": dataset_summary(ds),
        "split": split_info,
        "use_val_labels": use_val_labels,
        **rec,
    }
    return report, w, z


def _select(records: list[dict]) -> int:
    """Index of the best validation accuracy; earliest grid point wins ties."""
    vals = [r["val_accuracy"] for r in records]
    if any(v is None for v in vals):
        raise MissingMaskError("sweep selection requires a non-empty val mask")
    best = max(vals)
    return vals.index(best)


def _mean_sd(xs) -> dict:
    xs = [float(x) for x in xs]
    return {"mean": statistics.fmean(xs), "sd": statistics.pstdev(xs), "runs": len(xs)}


def run_sweep(ds: Dataset, grid: SweepGrid = SweepGrid(), n_splits: int = 10, seed: int = 0,
              use_val_labels: bool = False, threads: int | None = None, timing: bool = False,
              cs: CSParams = CSParams(), trained_grid: TrainedGrid | None = None,
              per_class_train: int = 20, per_class_val: int = 30) -> dict:
    """Evaluate every grid point on every split and select per split on validation accuracy.

    With ``trained_grid`` the trained baselines are swept instead of the trainless grid.
    """
    threads = worker_threads() if threads is None else max(int(threads), 1)
    splits = resolve_splits(ds, n_splits, seed, per_class_train, per_class_val)
    per_split = []
    for info, sds in splits:
        if sds.labels.val is None:
            raise MissingMaskError("sweep requires a val mask for selection, but the dataset has none")
        cache = FeatureCache(sds)
        if trained_grid is None:
            points = grid.points(cs)
            for h in sorted({c.hops for _, c in points}):
                cache.get(h)

            def job(p):
                return evaluate_trainless(sds, p[0], p[1], use_val_labels, cache, timing)[0]
        else:
            points = trained_grid.points(seed)
            for h in sorted({0, *(h for b, h, _ in points if b == "sgc")}):
                cache.get(h)

            def job(p):
                return evaluate_trained(sds, p[0], p[1], p[2], use_val_labels, cache, timing, cs)[0]

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                records = list(pool.map(job, points))
        else:
            records = [job(p) for p in points]
        best = _select(records)
        per_split.append({"split": info, "runs": records, "selected": best})

    chosen = [s["runs"][s["selected"]] for s in per_split]
    resolved = {
        "omegas": list(grid.omegas), "norm_kinds": list(grid.norm_kinds),
        "backbones": list(grid.backbones), "hops": list(grid.hops), "cs": asdict(cs),
    } if trained_grid is None else {
        "learning_rates": list(trained_grid.learning_rates), "weight_decays": list(trained_grid.weight_decays),
        "epochs": trained_grid.epochs, "backbones": list(trained_grid.backbones),
        "hops": list(trained_grid.hops), "cs": asdict(cs),
    }
    return {
        "command": "sweep",
        "model": "trainless" if trained_grid is None else "trained",
        "dataset": dataset_summary(ds),
        "grid": resolved,
        "seed": seed,
        "n_splits": len(splits),
        "use_val_labels": use_val_labels,
        "splits": per_split,
        "aggregate": {
            "test_accuracy": _mean_sd(r["test_accuracy"] for r in chosen),
            "val_accuracy": _mean_sd(r["val_accuracy"] for r in chosen),
            "selected_configs": [r["config"] for r in chosen],
        },
    }


def _median_time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def run_bench(ds: Dataset, backbone: str = "sgc", train_cfg: TrainConfig = TrainConfig(),
              fit_cfg: FitConfig = FitConfig(hops=2), repeats: int = 5, seed: int = 0,
              use_val_labels: bool = False) -> dict:
    """Median wall time of the trainless fit against gradient-descent training.

    Attribute propagation is identical for both and is timed separately;
    ``*_fit_seconds`` cover only the weight computation, ``*_total_seconds``
    add the propagation back.
    """
    from threadpoolctl import threadpool_limits

    _, ds = resolve_splits(ds, 1, seed)[0]
    labels = ds.labels
    fit = np.flatnonzero(labels.fit_mask(use_val_labels))
    hops_trainless = fit_cfg.hops
    hops_trained = fit_cfg.hops if backbone == "sgc" else 0
    b_fit = labels.onehot[fit]

    with threadpool_limits(limits=1):
        cache = FeatureCache(ds)
        h_fit = cache.get(hops_trainless)[fit]
        h_train = cache.get(hops_trained)[fit]

        def propagate(hops):
            return lambda: FeatureCache(ds).get(hops)

        def trainless():
            r = degree_norm_vector(ds.graph, fit_cfg.norm, fit)
            return fit_trainless(h_fit, b_fit, r, fit_cfg.omega)

        def trained():
            return train_linear(h_train, b_fit, train_cfg)

        t_prop_trainless = _median_time(propagate(hops_trainless), repeats)
        t_prop_trained = (t_prop_trainless if hops_trained == hops_trainless
                          else _median_time(propagate(hops_trained), repeats))
        t_trainless = _median_time(trainless, repeats)
        t_trained = _median_time(trained, repeats)

    return {
        "command": "bench",
        "dataset": dataset_summary(ds),
        "backbone": backbone,
        "fit_config": _fit_config_dict(backbone, fit_cfg),
        "train_config": asdict(train_cfg),
        "repeats": repeats,
        "fit_rows": int(len(fit)),
        "dense_products": {"trainless": 1, "trained": 2 * train_cfg.epochs + 1},
        "propagation_seconds": {"trainless": t_prop_trainless, "trained": t_prop_trained},
        "trainless_fit_seconds": t_trainless,
        "trained_fit_seconds": t_trained,
        "trainless_total_seconds": t_prop_trainless + t_trainless,
        "trained_total_seconds": t_prop_trained + t_trained,
        "fit_speedup": t_trained / t_trainless if t_trainless > 0 else None,
        "total_speedup": (t_prop_trained + t_trained) / (t_prop_trainless + t_trainless),
    }


BENCH_KEYS = {
    "command", "dataset", "backbone", "fit_config", "train_config", "repeats", "fit_rows",
    "dense_products", "propagation_seconds", "trainless_fit_seconds", "trained_fit_seconds",
    "trainless_total_seconds", "trained_total_seconds", "fit_speedup", "total_speedup",
}


def run_diagnose(ds: Dataset, out_dir, cfg: FitConfig = FitConfig(), backbone: str = "linear",
                 normalize: bool = True, seed: int = 0, use_val_labels: bool = False) -> dict:
    """Write QO statistics, the class-sorted Gram heatmap and the weight-alignment heatmap."""
    split_info, ds = resolve_splits(ds, 1, seed)[0]
    out = Path(out_dir)
    fit = np.flatnonzero(ds.labels.fit_mask(use_val_labels))
    cache = FeatureCache(ds)
    w, _ = fit_pipeline(ds, cfg, backbone, use_val_labels, cache)

    qo = diagnostics.qo_stats(ds.x, ds.labels, fit, normalize)
    gram, nodes = diagnostics.gram_heatmap(ds.x, ds.labels, fit, normalize)
    align = diagnostics.alignment_heatmap(w, cache.get(cfg.hops)[fit], ds.labels.y[fit])

    files = []
    files += diagnostics.export_heatmap(out / "gram", gram)
    files += diagnostics.export_heatmap(out / "alignment", align)
    diagnostics.write_csv(out / "weights.csv", w)
    atomic_write_text(out / "gram_nodes.txt", "".join(f"{i}\n" for i in nodes.tolist()))
    files += [out / "weights.csv", out / "gram_nodes.txt"]

    report = {
        "command": "diagnose",
        "dataset": dataset_summary(ds),
        "split": split_info,
        "fit_config": _fit_config_dict(backbone, cfg),
        "use_val_labels": use_val_labels,
        "qo": qo.to_dict(),
        "alignment_argmax_matches_class": float(np.mean(
            np.argmax(align, axis=0) == np.sort(ds.labels.y[fit], kind="stable"))),
        "files": sorted(p.name for p in files) + ["qo.json"],
    }
    write_report(out / "qo.json", report)
    return report
