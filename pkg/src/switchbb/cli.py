"""Command-line interface.

Subcommands: ``solve-switching`` and ``solve-be`` run one certified solve on
a CSV dataset, ``decompose`` runs the greedy bounded-error decomposition,
``gen`` writes a synthetic dataset, and ``bench`` runs a seeded experiment
family and writes its result tables.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bnb
from .bench import FAMILIES, ExperimentConfig, generate, run_experiment, write_outputs
from .berr import decompose, solve_be
from .core import load_dataset_csv, save_dataset_csv
from .swreg import solve_switching


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n", type=int, default=2, help="number of modes")
    parser.add_argument("--d", type=int, default=2, help="regressor dimension")
    parser.add_argument("--N", type=int, default=1000, help="number of data points")
    parser.add_argument("--sigma", type=float, default=0.1, help="noise standard deviation")
    parser.add_argument("--ratio", type=float, default=0.0, help="outlier ratio")
    parser.add_argument("--eps", type=float, default=None, help="error-tube half width")
    parser.add_argument("--tol", type=float, default=1e-3, help="relative optimality gap tolerance")
    parser.add_argument("--seed", type=int, default=0, help="random seed")
    parser.add_argument("--trials", type=int, default=10, help="number of trials")
    parser.add_argument("--box-halfwidth", type=float, default=10.0, help="initial box half width")
    parser.add_argument("--time-limit", type=float, default=None, help="per-solve time limit (s)")
    parser.add_argument("--node-limit", type=int, default=None, help="per-solve node limit")
    parser.add_argument("--workers", type=int, default=1, help="bounding workers (1 = deterministic)")
    parser.add_argument("--out", type=str, default=None, help="output path / prefix")
    parser.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")


def _options(args) -> bnb.SolveOptions:
    return bnb.SolveOptions(node_limit=args.node_limit, time_limit=args.time_limit, workers=args.workers)


def _progress(iteration: int, hi: float, lo: float, active: int) -> None:
    gap = (hi - lo) / hi if hi > 0 else 0.0
    print(f"  iter {iteration}: upper={hi:.6g} lower={lo:.6g} gap={gap:.3g} active={active}", file=sys.stderr)


def _emit_report(report, out: str | None) -> None:
    if out:
        report.save(out)
        print(f"report written to {out}")
    else:
        print(report.to_json())


def _cmd_solve_switching(args) -> int:
    data = load_dataset_csv(args.data)
    opts = _options(args)
    if args.verbose:
        opts.progress = _progress
    report = solve_switching(
        data, args.n, tol=args.tol, halfwidth=args.box_halfwidth, seed=args.seed, options=opts
    )
    _emit_report(report, args.out)
    return 0


def _cmd_solve_be(args) -> int:
    if args.eps is None:
        print("solve-be requires --eps", file=sys.stderr)
        return 2
    data = load_dataset_csv(args.data)
    opts = _options(args)
    if args.verbose:
        opts.progress = _progress
    report = solve_be(
        data, args.eps, args.p, tol=args.tol, halfwidth=args.box_halfwidth, seed=args.seed, options=opts
    )
    _emit_report(report, args.out)
    return 0


def _cmd_decompose(args) -> int:
    if args.eps is None:
        print("decompose requires --eps", file=sys.stderr)
        return 2
    data = load_dataset_csv(args.data)
    dec = decompose(
        data, args.eps, args.p, tol=args.tol, halfwidth=args.box_halfwidth, seed=args.seed,
        options=_options(args),
    )
    payload = {
        "n_estimated": dec.n_estimated,
        "submodels": [
            {"params": [float(v) for v in sm.params], "covered": [int(i) for i in sm.covered]}
            for sm in dec.submodels
        ],
        "leftover": [int(i) for i in dec.leftover],
        "solves": [r.to_dict() for r in dec.reports],
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"decomposition written to {args.out}")
    else:
        print(text)
    return 0


def _config_from_args(args) -> ExperimentConfig:
    losses = ("l0", "l2") if args.loss == "both" else (args.loss,)
    return ExperimentConfig(
        family=args.family,
        n=args.n,
        d=args.d,
        N=args.N,
        sigma=args.sigma,
        ratio=args.ratio,
        snr_db=args.snr_db,
        eps_rule="fixed" if args.eps is not None else "1.5sigma",
        eps=args.eps,
        tol=args.tol,
        box_halfwidth=args.box_halfwidth,
        seed=args.seed,
        trials=args.trials,
        affine=args.affine,
        positive_outliers=args.positive_outliers,
        losses=losses,
        node_limit=args.node_limit,
        time_limit=args.time_limit,
        workers=args.workers,
    )


def _cmd_gen(args) -> int:
    if not args.out:
        print("gen requires --out", file=sys.stderr)
        return 2
    config = _config_from_args(args)
    if config.family == "exact-recovery" and config.eps is None:
        config.eps, config.eps_rule = 1e-6, "fixed"
    data = generate(config, (config.seed, 0))
    save_dataset_csv(args.out, data)
    print(f"{data.N} points of dimension {data.d} written to {args.out}")
    return 0


def _cmd_bench(args) -> int:
    config = _config_from_args(args)
    if config.family == "exact-recovery" and config.eps is None:
        config.eps, config.eps_rule = 1e-6, "fixed"
    run = run_experiment(config)
    out = args.out or f"bench_{config.family}_seed{config.seed}"
    paths = write_outputs(run, out, args.format)
    for p in paths:
        print(f"wrote {p}")
    failed = [r for r in run.results if r.error is not None]
    if failed:
        print(f"{len(failed)} trial(s) failed; see the aggregate errors list", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="switchbb", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-switching", help="certified switching-regression solve on a CSV dataset")
    p.add_argument("--data", required=True, help="input dataset CSV")
    p.add_argument("--verbose", action="store_true", help="print live gap progress")
    _add_common(p)
    p.set_defaults(func=_cmd_solve_switching)

    p = sub.add_parser("solve-be", help="certified bounded-error solve on a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--p", type=int, choices=(0, 2), default=2, help="saturated-loss exponent")
    p.add_argument("--verbose", action="store_true")
    _add_common(p)
    p.set_defaults(func=_cmd_solve_be)

    p = sub.add_parser("decompose", help="greedy bounded-error decomposition of a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--p", type=int, choices=(0, 2), default=0)
    _add_common(p)
    p.set_defaults(func=_cmd_decompose)

    for name, fn in (("bench", _cmd_bench), ("gen", _cmd_gen)):
        p = sub.add_parser(name, help=f"{name} an experiment family")
        p.add_argument("family", choices=FAMILIES)
        p.add_argument("--snr-db", type=float, default=30.0, help="signal-to-noise ratio target (dB)")
        p.add_argument("--loss", choices=("l0", "l2", "both"), default="both")
        p.add_argument("--affine", action="store_true", help="affine model (constant regressor component)")
        p.add_argument("--positive-outliers", action="store_true", help="gross errors take absolute value")
        _add_common(p)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
