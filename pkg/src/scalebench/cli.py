"""``bench`` command line: run experiments and analyse their results."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from scalebench.analysis import LATENCY_TREND, demand_curve, emit_graph
from scalebench.errors import (
    BenchError,
    DimensionNotApplicable,
    IncompleteGrid,
    InsufficientSamples,
    InvalidConfig,
    MethodNotApplicable,
    SubexperimentFailed,
    ValidationError,
)
from scalebench.harness.config import METHODS, ExperimentConfig
from scalebench.harness.persist import load_experiment
from scalebench.harness.runner import run_experiment

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_SUBEXPERIMENT = 3

_VALIDATION = (ValidationError, DimensionNotApplicable, InvalidConfig, MethodNotApplicable, IncompleteGrid,
               InsufficientSamples)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="Scalability benchmarking of stream processing topologies.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every subexperiment of a config")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", required=True, type=Path)

    an = sub.add_parser("analyze", help="compute the demand curve of a result directory")
    an.add_argument("--in", dest="in_dir", required=True, type=Path)
    an.add_argument("--threshold", type=float, default=None,
                    help="slope threshold (lag_trend, latency_trend) or tolerance (output_count)")
    an.add_argument("--method", choices=METHODS, default=None)
    an.add_argument("--plot", type=Path, default=None,
                    help="plot file; demand.csv is written next to it (default: <in>/scalability.svg)")
    return p


def _run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    results = run_experiment(cfg, args.out)
    print(f"{len(results)} subexperiments written to {args.out}")
    return EXIT_OK


def _analyze(args) -> int:
    cfg, results = load_experiment(args.in_dir)
    method = args.method or cfg.sufficiency_method
    if method == LATENCY_TREND and args.threshold is None and cfg.latency_threshold is None:
        raise ValidationError("latency_trend requires --threshold")
    curve = demand_curve(results, cfg, method, args.threshold)
    for w in curve.warnings:
        print(f"warning: {w}", file=sys.stderr)
    plot = args.plot or args.in_dir / "scalability.svg"
    csv_path, plot_path = emit_graph(curve, plot.parent, plot)
    for w, d in curve.points:
        print(f"{w}\t{'unsatisfiable' if d is None else d}")
    print(f"wrote {csv_path} and {plot_path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args) if args.command == "run" else _analyze(args)
    except SubexperimentFailed as exc:
        print(f"subexperiment failed: {exc}", file=sys.stderr)
        return EXIT_SUBEXPERIMENT
    except _VALIDATION as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (BenchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
