"""Command-line interface: ``rfml generate | embed | compare | diagnose``.

Exit codes: 0 success, 1 unexpected failure, 2 usage or input error,
3 data not reducible, 4 numerical divergence. Set ``RFML_LOG_LEVEL`` (e.g.
``INFO``) for progress logging on stderr.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from typing import Optional

import numpy as np

from . import __version__
from .core_geometry import PointCloud, estimate_dimension, knn_search
from .data_io import KINDS, DatasetSpec, ExperimentReport, generate, load_csv, save_csv, save_report
from .embedders import METHODS, embed
from .errors import (
    FlowDivergenceError,
    InvalidDataError,
    InvalidParameterError,
    NotReducibleError,
    NumericalError,
    ParseError,
    RFMLError,
)
from .evaluation import curvature_histogram, nn_classify, npr, npr_vs_k_sweep
from .ricci_flow import FlowConfig

log = logging.getLogger("rfml")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NOT_REDUCIBLE, EXIT_DIVERGED = 0, 1, 2, 3, 4
FINALS = ("auto", "pca", "isomap", "lle", "lep", "ltsa")


class UsageError(Exception):
    pass


def _int_list(text: str) -> list:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _method_list(text: str) -> list:
    methods = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise argparse.ArgumentTypeError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
    return methods


def _param(text: str):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"parameter {key!r} needs a number") from None


def _add_dataset_args(p, required_kind=False):
    src = p.add_mutually_exclusive_group(required=not required_kind)
    src.add_argument("--in", dest="input", help="input CSV (rows are points)")
    src.add_argument("--kind", choices=KINDS, help="generate a synthetic dataset instead of reading a file")
    p.add_argument("--n", type=int, default=1000, help="sample count for --kind (default 1000)")
    p.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE",
                   help="generator parameter, e.g. c=0.5 for the ellipsoid (repeatable)")
    p.add_argument("--label-column", help="name of the integer label column in --in")
    p.add_argument("--seed", type=int, default=0, help="seed for generation and splits (default 0)")


def _add_flow_args(p):
    p.add_argument("--final", choices=FINALS, default="auto", help="final reducer for rfml (default auto)")
    p.add_argument("--dt", type=float, default=FlowConfig.dt, help="initial flow step size")
    p.add_argument("--tol", type=float, default=FlowConfig.tol, help="flow tolerance on |r - C|")
    p.add_argument("--max-iters", type=int, default=FlowConfig.max_iters)
    p.add_argument("--target-c", type=float, default=None, help="fix the target curvature C")
    p.add_argument("--lam", type=float, default=FlowConfig.lam, help="normalization weight (0 gives the raw flow)")
    p.add_argument("--trace", metavar="PATH", help="write per-iteration flow records (NDJSON) to PATH")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfml", description="Ricci-flow manifold learning and baselines.")
    parser.add_argument("--version", action="version", version=f"rfml {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset to CSV")
    g.add_argument("--kind", choices=KINDS, required=True)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE")
    g.add_argument("--out", required=True)

    e = sub.add_parser("embed", help="embed one dataset with one method")
    _add_dataset_args(e)
    e.add_argument("--method", choices=METHODS, default="rfml")
    e.add_argument("--k", type=int, default=10)
    e.add_argument("--d", type=int, default=None, help="target dimension (rfml estimates it when omitted)")
    e.add_argument("--out", required=True, help="embedding CSV")
    e.add_argument("--report", help="JSON report path (default: <out stem>.report.json)")
    e.add_argument("--timings", action="store_true", help="include wall-clock timings in the report")
    _add_flow_args(e)

    c = sub.add_parser("compare", help="score several methods on one dataset")
    _add_dataset_args(c)
    c.add_argument("--methods", type=_method_list, default=list(METHODS))
    c.add_argument("--k", type=int, default=10)
    c.add_argument("--d", type=int, default=2)
    c.add_argument("--k-sweep", type=_int_list, help="comma-separated K values for a stability sweep")
    c.add_argument("--split-seed", type=int, default=None, help="seed of the classification split (default --seed)")
    c.add_argument("--out", required=True, help="JSON report path; a .csv metric table is written beside it")
    c.add_argument("--timings", action="store_true")
    _add_flow_args(c)

    dg = sub.add_parser("diagnose", help="dimension and curvature histograms")
    _add_dataset_args(dg)
    dg.add_argument("--k", type=int, default=10)
    dg.add_argument("--ratio", type=float, default=0.95)
    dg.add_argument("--bins", type=int, default=20)
    dg.add_argument("--out", required=True, help="JSON report path")
    return parser


def _load(args) -> tuple:
    if args.input:
        cloud = load_csv(args.input, args.label_column)
        return cloud, {"source": "csv", "path": os.path.basename(args.input), "label_column": args.label_column}
    spec = DatasetSpec(args.kind, args.n, args.seed, dict(args.param))
    return generate(spec), {"source": "generate", "kind": spec.kind, "n": spec.n, "seed": spec.seed,
                            "params": spec.resolved_params()}


def _flow_config(args) -> FlowConfig:
    try:
        return FlowConfig(dt=args.dt, tol=args.tol, max_iters=args.max_iters, target_c=args.target_c, lam=args.lam)
    except ValueError as exc:
        raise InvalidParameterError(str(exc)) from None


def _run(cloud, method, d, K, args, trace=None):
    if method == "rfml":
        return embed(cloud, "rfml", d, K, flow_config=_flow_config(args), final_method=args.final, trace_path=trace)
    if d is None:
        d = estimate_dimension(cloud, knn_search(cloud, K)).chosen_d
    return embed(cloud, method, d, K)


def _flow_summary(res) -> dict:
    keep = ("C", "flat", "final_method", "converged_fraction", "initial_energy", "total_energy",
            "iterations_max", "iterations_median", "elliptic_clamped_fraction", "monitor_ok_fraction", "radius")
    return {k: res.diagnostics[k] for k in keep if k in res.diagnostics}


def cmd_generate(args) -> int:
    cloud = generate(DatasetSpec(args.kind, args.n, args.seed, dict(args.param)))
    save_csv(cloud, args.out)
    return EXIT_OK


def cmd_embed(args) -> int:
    cloud, data_cfg = _load(args)
    t0 = time.perf_counter()
    res = _run(cloud, args.method, args.d, args.k, args, trace=args.trace)
    elapsed = time.perf_counter() - t0
    save_csv(PointCloud(res.coords), args.out)
    report = ExperimentReport(
        config={"command": "embed", "dataset": data_cfg, "method": args.method, "K": args.k, "d": args.d,
                "params": res.params},
        metrics=[{"method": args.method, "metric": "npr", "K": args.k, "value": npr(cloud, res, args.k).value}],
        flow=_flow_summary(res) if args.method == "rfml" else {},
        dimension_histogram=res.diagnostics.get("dimension_histogram", {}),
        timings={"embed_seconds": elapsed} if args.timings else {},
    )
    path = args.report or os.path.splitext(args.out)[0] + ".report.json"
    save_report(report, path)
    return EXIT_OK


def cmd_compare(args) -> int:
    cloud, data_cfg = _load(args)
    flow_cfg = _flow_config(args)
    metrics, flow, timings = [], {}, {}
    split_seed = args.seed if args.split_seed is None else args.split_seed
    for m in args.methods:
        t0 = time.perf_counter()
        res = _run(cloud, m, args.d, args.k, args, trace=args.trace if m == "rfml" else None)
        timings[m] = time.perf_counter() - t0
        metrics.append({"method": m, "metric": "npr", "K": args.k, "value": npr(cloud, res, args.k).value})
        if cloud.labels is not None:
            acc = nn_classify(res, cloud.labels, split_seed)
            metrics.append({"method": m, "metric": "accuracy", "K": args.k, "value": acc.accuracy})
        if m == "rfml":
            flow = _flow_summary(res)
    if args.k_sweep:
        kw = {"flow_config": flow_cfg, "final_method": args.final}
        for row in npr_vs_k_sweep(cloud, args.methods, args.k_sweep, d=args.d, **kw):
            metrics.append({"method": row["method"], "metric": "npr_sweep", "K": row["K"], "value": row["npr"]})
    report = ExperimentReport(
        config={"command": "compare", "dataset": data_cfg, "methods": args.methods, "K": args.k, "d": args.d,
                "k_sweep": args.k_sweep, "split_seed": split_seed,
                "flow": {"dt": flow_cfg.dt, "tol": flow_cfg.tol, "max_iters": flow_cfg.max_iters,
                         "target_c": flow_cfg.target_c, "lam": flow_cfg.lam, "final": args.final}},
        metrics=metrics,
        flow=flow,
        timings=timings if args.timings else {},
    )
    save_report(report, args.out)
    for row in metrics:
        print(f"{row['method']:>7}  {row['metric']:<9} K={row['K']:<3} {row['value']:.4f}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cloud, data_cfg = _load(args)
    graph = knn_search(cloud, args.k)
    dims = estimate_dimension(cloud, graph, args.ratio)
    d = min(max(dims.chosen_d, 1), cloud.dim - 1) if cloud.dim > 1 else None
    curv = {}
    if d is not None:
        h = curvature_histogram(cloud, args.k, args.bins, d=d)
        curv = {"bin_edges": h.bin_edges, "counts": h.counts,
                "quantiles": dict(zip(("p10", "p50", "p90"), np.quantile(h.per_point_scalars, [0.1, 0.5, 0.9])))}
    report = ExperimentReport(
        config={"command": "diagnose", "dataset": data_cfg, "K": args.k, "ratio": args.ratio, "bins": args.bins},
        dimension_histogram=dims.histogram,
        curvature_histogram=curv,
        flow={"chosen_d": dims.chosen_d, "not_reducible": dims.not_reducible},
    )
    save_report(report, args.out)
    total = sum(dims.histogram.values())
    for dim, count in sorted(dims.histogram.items()):
        print(f"dimension {dim}: {count} of {total}")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "embed": cmd_embed, "compare": cmd_compare, "diagnose": cmd_diagnose}


def main(argv: Optional[list] = None) -> int:
    level = os.environ.get("RFML_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except NotReducibleError as exc:
        print(f"rfml: not reducible: {exc}", file=sys.stderr)
        return EXIT_NOT_REDUCIBLE
    except (FlowDivergenceError, NumericalError) as exc:
        print(f"rfml: numerical failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (InvalidParameterError, InvalidDataError, ParseError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"rfml: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RFMLError as exc:
        print(f"rfml: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        print(f"rfml: unexpected error: {exc!r}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
