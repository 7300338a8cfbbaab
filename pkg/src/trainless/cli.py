"""Command-line interface: ``trainless {fit,sweep,eval,bench,diagnose,synth,split}``."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import diagnostics, harness
from .data import SynthConfig, load_dataset, save_dataset, synth_qo, write_split
from .fit import BACKBONES, NORM_KINDS, FitConfig
from .graph import CSParams
from .labels import make_split
from .train import TrainConfig

PROG = "trainless"


def _add_data(p, required=True):
    p.add_argument("--data", required=required, metavar="DIR", help="dataset directory")


def _option(p, multi, flag, **kw):
    """Single-valued flag, or a repeatable one collecting a list when ``multi``."""
    if multi:
        kw.pop("default", None)
        kw["action"] = "append"
    p.add_argument(flag, **kw)


def _add_model(p, multi=False):
    _option(p, multi, "--backbone", choices=BACKBONES, default="sgc")
    _option(p, multi, "--omega", type=float, default=0.0)
    _option(p, multi, "--norm", type=str.lower, choices=NORM_KINDS, default="cn")
    _option(p, multi, "--hops", type=int, default=None,
            help="propagation steps for fitting (default: 2 for sgc, 0 otherwise)")
    p.add_argument("--use-val-labels", action="store_true", help="fit on train and val labels")
    cs = p.add_argument_group("Correct & Smooth")
    cs.add_argument("--alpha1", type=float, default=0.9)
    cs.add_argument("--alpha2", type=float, default=0.9)
    cs.add_argument("--gamma", type=float, default=1.0)
    cs.add_argument("--l1", type=int, default=50)
    cs.add_argument("--l2", type=int, default=50)


def _add_train(p, multi=False):
    _option(p, multi, "--lr", type=float, default=0.2)
    _option(p, multi, "--weight-decay", type=float, default=5e-4)
    p.add_argument("--epochs", type=int, default=100)


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--json", action="store_true", help="print the JSON report to stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description="Closed-form linear GNN fitting on text-attributed graphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one model and report accuracies")
    _add_data(p)
    _add_model(p)
    _add_common(p)
    p.add_argument("--trained", action="store_true", help="train with gradient descent instead")
    _add_train(p)
    p.add_argument("--weights", metavar="CSV", help="also write W as headerless CSV")
    p.add_argument("--logits", metavar="CSV", help="also write the full-graph logits as CSV")
    p.add_argument("--timing", action="store_true", help="include wall time in the report")

    p = sub.add_parser("sweep", help="grid search selected on validation accuracy")
    _add_data(p)
    _add_model(p, multi=True)
    _add_common(p)
    p.add_argument("--splits", type=int, default=10, help="random splits when the dataset has no fixed split")
    p.add_argument("--train-per-class", type=int, default=20)
    p.add_argument("--val-per-class", type=int, default=30)
    p.add_argument("--trained", action="store_true", help="sweep the gradient-descent baselines")
    _add_train(p, multi=True)
    p.add_argument("--timing", action="store_true", help="include per-run wall time (breaks byte-stability)")

    p = sub.add_parser("eval", help="accuracy of a logits CSV on a mask")
    _add_data(p)
    p.add_argument("--logits", required=True, metavar="CSV")
    p.add_argument("--mask", choices=("train", "val", "test"), default="test")
    _add_common(p)

    p = sub.add_parser("bench", help="wall time of trainless vs trained fitting")
    _add_data(p)
    _add_model(p)
    _add_train(p)
    _add_common(p)
    p.add_argument("--repeats", type=int, default=5)

    p = sub.add_parser("diagnose", help="quasi-orthogonality and alignment heatmaps")
    _add_data(p)
    _add_model(p)
    _add_common(p)
    p.add_argument("--raw", action="store_true", help="use raw inner products instead of cosine")

    p = sub.add_parser("synth", help="generate a synthetic quasi-orthogonal dataset")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--d", type=int, default=600)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--words-per-class", type=int, default=200)
    p.add_argument("--words-per-node", type=int, default=10)
    p.add_argument("--p-intra", type=float, default=0.02)
    p.add_argument("--p-inter", type=float, default=0.001)
    p.add_argument("--split", type=int, nargs=2, metavar=("TRAIN", "VAL"),
                   help="attach a per-class split drawn from --seed")
    _add_common(p)

    p = sub.add_parser("split", help="write a per-class random split file")
    _add_data(p)
    p.add_argument("--train-per-class", type=int, default=20)
    p.add_argument("--val-per-class", type=int, default=30)
    _add_common(p)
    return parser


def _fit_config(args) -> FitConfig:
    hops = args.hops if args.hops is not None else (2 if args.backbone == "sgc" else 0)
    return FitConfig(omega=args.omega, norm=args.norm, hops=hops, cs=_cs(args))


def _cs(args) -> CSParams:
    return CSParams(alpha1=args.alpha1, alpha2=args.alpha2, gamma=args.gamma, l1=args.l1, l2=args.l2)


def _emit(args, report: dict, summary: str) -> None:
    if args.out and args.command in ("fit", "sweep", "eval", "bench"):
        harness.write_report(args.out, report)
    if args.json:
        sys.stdout.write(harness.dumps(report))
    else:
        print(summary)


def _pct(x) -> str:
    return "n/a" if x is None else f"{100 * x:.2f}%"


def cmd_fit(args) -> None:
    ds = load_dataset(args.data)
    cfg = _fit_config(args)
    trained = None
    if args.trained:
        trained = TrainConfig(learning_rate=args.lr, epochs=args.epochs, weight_decay=args.weight_decay, seed=args.seed)
    report, w, z = harness.run_fit(ds, args.backbone, cfg, args.use_val_labels, args.seed, args.timing, trained)
    if args.weights:
        diagnostics.write_csv(args.weights, w)
    if args.logits:
        diagnostics.write_csv(args.logits, z)
    _emit(args, report, " ".join(f"{k}={_pct(report[f'{k}_accuracy'])}" for k in ("train", "val", "test")))


def cmd_sweep(args) -> None:
    ds = load_dataset(args.data)
    grid = harness.SweepGrid(
        omegas=tuple(args.omega or harness.DEFAULT_OMEGAS),
        norm_kinds=tuple(args.norm or harness.DEFAULT_NORMS),
        backbones=tuple(args.backbone or ("sgc",)),
        hops=tuple(args.hops or harness.DEFAULT_HOPS),
    )
    trained_grid = None
    if args.trained:
        trained_grid = harness.TrainedGrid(
            learning_rates=tuple(args.lr or (0.05, 0.2, 0.5)),
            weight_decays=tuple(args.weight_decay or (0.0, 5e-4)),
            epochs=args.epochs,
            backbones=grid.backbones,
            hops=tuple(args.hops or (2,)),
        )
    report = harness.run_sweep(ds, grid, args.splits, args.seed, args.use_val_labels, timing=args.timing,
                               cs=_cs(args), trained_grid=trained_grid,
                               per_class_train=args.train_per_class, per_class_val=args.val_per_class)
    agg = report["aggregate"]["test_accuracy"]
    _emit(args, report, f"test accuracy {100 * agg['mean']:.2f} ± {100 * agg['sd']:.2f} over {agg['runs']} split(s)")


def cmd_eval(args) -> None:
    ds = load_dataset(args.data)
    z = diagnostics.read_csv(args.logits)
    if z.shape != (ds.n, ds.n_classes):
        raise ValueError(f"logits have shape {z.shape}, expected {(ds.n, ds.n_classes)}")
    acc = harness.accuracy(z, ds.labels, ds.labels.mask(args.mask))
    report = {"command": "eval", "dataset": harness.dataset_summary(ds), "mask": args.mask, "accuracy": acc}
    _emit(args, report, f"{args.mask} accuracy {_pct(acc)}")


def cmd_bench(args) -> None:
    ds = load_dataset(args.data)
    cfg = _fit_config(args)
    tcfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs, weight_decay=args.weight_decay, seed=args.seed)
    report = harness.run_bench(ds, args.backbone, tcfg, cfg, args.repeats, args.seed, args.use_val_labels)
    _emit(args, report, (f"trainless fit {report['trainless_fit_seconds']:.3g}s, "
                         f"trained fit {report['trained_fit_seconds']:.3g}s "
                         f"(x{report['fit_speedup']:.1f}); propagation "
                         f"{report['propagation_seconds']['trainless']:.3g}s"))


def cmd_diagnose(args) -> None:
    if not args.out:
        raise ValueError("diagnose needs --out DIR")
    ds = load_dataset(args.data)
    cfg = _fit_config(args)
    report = harness.run_diagnose(ds, args.out, cfg, args.backbone, not args.raw, args.seed, args.use_val_labels)
    qo = report["qo"]
    _emit(args, report, f"intra {qo['intra_mean']} inter {qo['inter_mean']} ratio {qo['qo_ratio']}; wrote {args.out}")


def cmd_synth(args) -> None:
    if not args.out:
        raise ValueError("synth needs --out DIR")
    cfg = SynthConfig(n=args.n, d=args.d, C=args.classes, words_per_class=args.words_per_class,
                      words_per_node=args.words_per_node, p_intra=args.p_intra, p_inter=args.p_inter,
                      seed=args.seed)
    ds = synth_qo(cfg, split=tuple(args.split) if args.split else None)
    save_dataset(ds, args.out)
    report = {"command": "synth", "dataset": harness.dataset_summary(ds), "config": vars(cfg)}
    _emit(args, report, f"wrote {ds.name} ({ds.n} nodes, {ds.graph.n_edges} edges) to {args.out}")


def cmd_split(args) -> None:
    if not args.out:
        raise ValueError("split needs --out FILE")
    ds = load_dataset(args.data)
    masks = make_split(ds.labels, args.train_per_class, args.val_per_class, seed=args.seed)
    labels = ds.labels.with_split(*masks)
    write_split(args.out, labels)
    report = {"command": "split", "seed": args.seed, "train": int(masks[0].sum()), "val": int(masks[1].sum()),
              "test": int(masks[2].sum())}
    _emit(args, report, f"train {report['train']} / val {report['val']} / test {report['test']} -> {args.out}")


COMMANDS = {
    "fit": cmd_fit, "sweep": cmd_sweep, "eval": cmd_eval, "bench": cmd_bench,
    "diagnose": cmd_diagnose, "synth": cmd_synth, "split": cmd_split,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (ValueError, OSError, IndexError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
