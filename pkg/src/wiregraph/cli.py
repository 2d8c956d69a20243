"""Command-line entry point: ``wiregraph <subcommand> [flags]``.

Subcommands
-----------
gen-data        build a synthetic dataset (JSON: task, meta, train, test)
spectra         spectral coordinates of a graph (JSON: m, variant, skip_trivial,
                coords, eigenvalues; lowrank adds residuals and notes)
verify          run property suites; exit 1 if any check fails
train           train a model on a dataset; log is JSON lines, one per epoch,
                ``--checkpoint`` receives the best-epoch weights
eval            normalized RMSE of a checkpoint on a dataset split
dump-attention  final-layer attention scores for one example
bench-grid      train a grid of (m, deletions, seed) cells

Global flags ``--seed``, ``--out`` (default stdout) and ``--format {json,csv}``
may appear before or after the subcommand.  Every random draw derives from
``--seed`` through named sub-streams, so repeated runs produce identical bytes.
Exit codes: 0 success, 1 runtime failure (or failed checks), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from . import bench, verify
from .graph import Graph, laplacian
from .lowrank import DegreeMode, KernelGraphSpec, build_factors, jlt_compress, lowrank_eig, sample_fourier_features
from .nn import ModelConfig, WireTransformer, evaluate, train
from .rng import Rng
from .spectral import Variant, eig_dense, eig_lanczos, spectral_features

log = logging.getLogger("wiregraph")


class UsageError(Exception):
    pass


def _int_list(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _existing(path: str) -> str:
    if not os.path.isfile(path):
        raise argparse.ArgumentTypeError(f"no such file: {path}")
    return path


def _writable(path: str) -> str:
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise argparse.ArgumentTypeError(f"directory does not exist: {parent}")
    return path


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subparser copies use SUPPRESS so a flag given before the subcommand survives
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=default(0), help="root random seed (default 0)")
    p.add_argument("--out", default=default("-"), help="output path, '-' for stdout")
    p.add_argument("--format", choices=["json", "csv"], default=default("json"))
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wiregraph", parents=[_global_flags(False)],
                                     description="Graph-spectral rotary encodings toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    common = [_global_flags(True)]

    p = sub.add_parser("gen-data", parents=common, help="generate a synthetic dataset")
    p.add_argument("--task", choices=[t.value for t in bench.Task], required=True)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--rows", type=int, default=5)
    p.add_argument("--cols", type=int, default=5)
    p.add_argument("--delete", type=int, default=10, help="edges removed from the grid (mono)")
    p.add_argument("--colors", type=int, default=3, help="node colours (mono)")
    p.add_argument("--n", type=int, default=10, help="Watts-Strogatz size (spd)")
    p.add_argument("--k", type=int, default=2, help="Watts-Strogatz neighbours (spd)")
    p.add_argument("--p", type=float, default=0.6, help="rewiring probability (spd)")

    p = sub.add_parser("spectra", parents=common, help="compute spectral coordinates")
    p.add_argument("--graph", type=_existing, required=True, help="graph JSON file")
    p.add_argument("--method", choices=["dense", "lanczos", "lowrank"], default="dense")
    p.add_argument("--m", type=int, required=True, help="number of coordinate columns")
    p.add_argument("--variant", choices=[v.value for v in Variant], default="raw")
    p.add_argument("--keep-trivial", action="store_true", help="keep the constant eigenvector")
    p.add_argument("--r", type=int, default=2048, help="random features (lowrank)")
    p.add_argument("--p", type=int, default=64, help="projection width (lowrank)")
    p.add_argument("--sigma", type=float, default=1.0, help="kernel bandwidth (lowrank)")
    p.add_argument("--degrees", choices=[d.value for d in DegreeMode], default="exact")

    p = sub.add_parser("verify", parents=common, help="run property suites")
    p.add_argument("--suite", choices=["all", *verify.SUITES], default="all")

    p = sub.add_parser("train", parents=common, help="train a model")
    p.add_argument("--data", type=_existing, required=True)
    p.add_argument("--checkpoint", type=_writable, required=True, help="where to write best-epoch weights")
    p.add_argument("--m", type=int, default=0, help="WIRE coordinate count (0 disables)")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--attention", choices=["softmax", "performer_relu"], default="softmax")
    p.add_argument("--share-wire", action="store_true")

    for name, helptext in (("eval", "evaluate a checkpoint"),
                           ("dump-attention", "final-layer attention scores")):
        p = sub.add_parser(name, parents=common, help=helptext)
        p.add_argument("--checkpoint", type=_existing, required=True)
        p.add_argument("--data", type=_existing, required=True)
        p.add_argument("--split", choices=["train", "test"], default="test")
        if name == "dump-attention":
            p.add_argument("--index", type=int, default=0)
            p.add_argument("--wire", choices=["on", "off"], default="on")

    p = sub.add_parser("bench-grid", parents=common, help="train an experiment grid")
    p.add_argument("--task", choices=[t.value for t in bench.Task], required=True)
    p.add_argument("--m-values", type=_int_list, default=(0, 3, 5, 10))
    p.add_argument("--delete-values", type=_int_list, default=(0, 5, 10, 15))
    p.add_argument("--seeds", type=_int_list, default=(0, 1, 2, 3))
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--colors", type=int, default=3)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--workers", type=int, default=None,
                   help="parallel cells (default: WIRE_NUM_THREADS or 1)")
    p.add_argument("--timing", action="store_true",
                   help="record wall-clock seconds (output is then not reproducible)")
    return parser


# output helpers


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True) + "\n"


def _emit(args, text: str):
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)


def _load_dataset(path: str) -> bench.Dataset:
    with open(path) as fh:
        return bench.Dataset.from_json(fh.read())


# subcommands


def cmd_gen_data(args) -> int:
    rng = Rng(args.seed).child("data")
    if args.task == "mono":
        ds = bench.build_mono_dataset(args.n_train, args.n_test, args.delete, args.colors, rng,
                                      rows=args.rows, cols=args.cols)
    else:
        ds = bench.build_spd_dataset(args.n_train, args.n_test, rng, n=args.n, k=args.k, p=args.p)
    if args.format == "json":
        _emit(args, ds.to_json() + "\n")
    else:
        rows = [(split, i, ex.graph.n, repr(ex.label),
                 "" if ex.source is None else ex.source, "" if ex.target is None else ex.target,
                 ex.graph.to_json())
                for split, exs in (("train", ds.train), ("test", ds.test))
                for i, ex in enumerate(exs)]
        _emit(args, _csv(["split", "index", "n", "label", "source", "target", "graph"], rows))
    return 0


def cmd_spectra(args) -> int:
    if args.m < 1:
        raise UsageError("--m must be at least 1")
    with open(args.graph) as fh:
        g = Graph.from_json(fh.read())
    skip = not args.keep_trivial
    k = min(g.n, args.m + (1 if skip else 0))
    extra = {}
    if args.method == "dense":
        spec = eig_dense(laplacian(g), k)
    elif args.method == "lanczos":
        spec = eig_lanczos(laplacian(g), m=k, rng=Rng(args.seed).child("lanczos"))
    else:
        if g.points is None:
            raise UsageError("--method lowrank needs a graph file with point coordinates")
        if args.p < k:
            raise UsageError(f"--p {args.p} cannot yield {k} eigenpairs")
        rng = Rng(args.seed).child("lowrank")
        kspec = KernelGraphSpec(g.points, args.sigma)
        feats = sample_fourier_features(kspec, args.r, rng.child("features"))
        factors = jlt_compress(build_factors(kspec, feats, args.degrees), args.p, rng.child("jlt"))
        low = lowrank_eig(factors, k)
        spec = low.to_spectrum()
        extra = {"residuals": low.residuals.tolist(),
                 "eigenvalues_imag": np.imag(low.eigenvalues).tolist(),
                 "degree_clamped": factors.clamped, "notes": low.notes}
    coords = spectral_features(spec, args.variant, skip_trivial=skip)
    if args.format == "json":
        _emit(args, _json({**coords.to_dict(), **extra, "method": args.method}))
    else:
        header = ["node"] + [f"c{j}" for j in range(coords.m)]
        _emit(args, _csv(header, [[i, *map(repr, row)] for i, row in enumerate(coords.coords.tolist())]))
    return 0


def cmd_verify(args) -> int:
    report = verify.run_suites(args.suite)
    if args.format == "json":
        _emit(args, _json(report))
    else:
        rows = [(c["suite"], c["check"], repr(c["statistic"]),
                 "" if c["threshold"] is None else repr(c["threshold"]), c["pass"])
                for c in report["checks"]]
        _emit(args, _csv(["suite", "check", "statistic", "threshold", "pass"], rows))
    return 0 if report["pass"] else 1


def cmd_train(args) -> int:
    ds = _load_dataset(args.data)
    cfg = ModelConfig(input_dim=ds.train[0].inputs.shape[1], wire_m=args.m,
                      dropout_rate=args.dropout, attention_kind=args.attention,
                      share_wire_across_layers=args.share_wire)
    res = train(cfg, ds.train, ds.test, args.epochs, args.batch_size, Rng(args.seed).child("train"),
                base_lr=args.lr, weight_decay=args.weight_decay)
    res.model.load_state_dict(res.best_state)
    res.model.save(args.checkpoint, extra={"best_test_rmse": res.best_test_rmse,
                                           "best_epoch": res.best_epoch})
    if args.format == "json":
        _emit(args, res.log_jsonl())
    else:
        _emit(args, _csv(["epoch", "train_loss", "test_rmse", "lr"],
                         [(r["epoch"], repr(r["train_loss"]), repr(r["test_rmse"]), repr(r["lr"]))
                          for r in res.log]))
    return 0


def _load_checkpoint(args, ds: bench.Dataset) -> WireTransformer:
    model, _ = WireTransformer.load(args.checkpoint)
    width = ds.train[0].inputs.shape[1]
    if model.cfg.input_dim != width:
        raise UsageError(f"checkpoint expects {model.cfg.input_dim} input features, dataset has {width}")
    return model


def cmd_eval(args) -> int:
    ds = _load_dataset(args.data)
    model = _load_checkpoint(args, ds)
    examples = ds.test if args.split == "test" else ds.train
    rmse = evaluate(model, examples)
    if args.format == "json":
        _emit(args, _json({"split": args.split, "n_examples": len(examples), "normalized_rmse": rmse}))
    else:
        _emit(args, _csv(["split", "n_examples", "normalized_rmse"], [(args.split, len(examples), repr(rmse))]))
    return 0


def cmd_dump_attention(args) -> int:
    ds = _load_dataset(args.data)
    model = _load_checkpoint(args, ds)
    examples = ds.test if args.split == "test" else ds.train
    if not 0 <= args.index < len(examples):
        raise UsageError(f"--index must lie in [0, {len(examples)})")
    ex = examples[args.index]
    m = model.cfg.wire_m
    coords = None
    if m:
        coords = np.zeros((ex.graph.n, m))
        cols = min(m, ex.coords.shape[1])
        coords[:, :cols] = ex.coords[:, :cols]
    cap: dict = {}
    model.forward(ex.inputs, coords, train=False, wire=args.wire == "on", capture=cap)
    scores = cap["scores"][0]
    if args.format == "json":
        _emit(args, _json({"split": args.split, "index": args.index, "wire": args.wire == "on",
                           "n": ex.graph.n, "scores": scores.tolist()}))
    else:
        _emit(args, _csv(["row"] + [f"col{j}" for j in range(scores.shape[1])],
                         [[i, *map(repr, row)] for i, row in enumerate(scores.tolist())]))
    return 0


def cmd_bench_grid(args) -> int:
    grid = bench.ExperimentGrid(args.task, args.m_values, args.delete_values, args.seeds,
                                args.n_train, args.n_test, args.epochs, args.batch_size, args.colors,
                                args.lr)
    result = bench.run_grid(grid, workers=args.workers)
    if not args.timing:
        for r in result["rows"]:
            r["wall_seconds"] = None
    if args.format == "json":
        _emit(args, _json(result))
    else:
        _emit(args, bench.rows_to_csv(result["rows"], include_timing=args.timing))
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "spectra": cmd_spectra,
    "verify": cmd_verify,
    "train": cmd_train,
    "eval": cmd_eval,
    "dump-attention": cmd_dump_attention,
    "bench-grid": cmd_bench_grid,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.out != "-":
        parent = os.path.dirname(os.path.abspath(args.out))
        if not os.path.isdir(parent):
            parser.error(f"output directory does not exist: {parent}")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except Exception as exc:  # runtime failure: report and exit 1
        log.debug("failure", exc_info=True)
        print(f"wiregraph {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0
