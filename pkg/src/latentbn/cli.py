"""Command-line driver: ``latentbn {simulate,bounds,fisher,fit,report}``.

Exit codes: 0 success, 2 validation error, 3 enumeration budget exceeded,
4 invariant check failed (report).
"""

from __future__ import annotations

import argparse
import json
import sys

from .asymptotics import FIT_MODELS
from .estimation import ERROR_KINDS
from .evidence import BudgetError, Hyper
from .harness.config import ConfigError, example_config, load_config, parse_config
from .harness.report import write_report
from .harness.runner import bounds_table, fisher_summary, fit_results, shape_from_args, simulate
from .model import ShapeError, load_fixture

EXIT_OK, EXIT_VALIDATION, EXIT_BUDGET, EXIT_INVARIANT = 0, 2, 3, 4


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latentbn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="estimate error curves for a config")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.add_argument("--seed", type=_u64, help="override master_seed")
    p.add_argument("--threads", type=int, default=1, help="worker processes for replicates")
    p.add_argument("--kind", action="append", choices=ERROR_KINDS, help="restrict to these kinds (repeatable)")
    p.add_argument("--record-timing", action="store_true", help="fill wall_time_ms (makes output nondeterministic)")
    p.add_argument("--allow-partial", action="store_true", help="write over-budget cells as status rows instead of failing")
    p.add_argument("--print-example", action="store_true", help="print an example config and exit")

    p = sub.add_parser("bounds", help="bound table over an eta1 grid")
    p.add_argument("--config", help="take shape and eta grid from a config")
    p.add_argument("--K", type=int)
    p.add_argument("--Kstar", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--eta1", type=float, nargs="+")
    p.add_argument("--eta2", type=float, default=1.0)
    p.add_argument("--out", default=".")

    p = sub.add_parser("fisher", help="Fisher matrices and Dn coefficients of a true model")
    p.add_argument("--model", required=True, help="true-model fixture JSON")
    p.add_argument("--Kt", type=int)
    p.add_argument("--out", default=".")

    p = sub.add_parser("fit", help="fit the ln n coefficient of a results curve")
    p.add_argument("--results", required=True, help="results.csv from simulate")
    p.add_argument("--kind", required=True, choices=ERROR_KINDS)
    p.add_argument("--model", default="lambda_only", choices=FIT_MODELS)
    p.add_argument("--eta1", type=float)
    p.add_argument("--eta2", type=float)
    p.add_argument("--out", default=".")

    p = sub.add_parser("report", help="collate a run directory into report.md")
    p.add_argument("run_dir", nargs="?", help="run directory (or use --out)")
    p.add_argument("--out", help="run directory")
    return parser


def _simulate(args) -> int:
    if args.print_example:
        print(json.dumps(example_config(), indent=2))
        return EXIT_OK
    if not args.config:
        raise ConfigError("--config is required")
    config = load_config(args.config)
    if args.kind:
        doc = config.to_dict()
        doc["kinds"] = list(dict.fromkeys(args.kind))
        if config.true_source:
            doc["true"] = config.true_source
        config = parse_config(doc)
    config = config.with_overrides(master_seed=args.seed)
    if args.threads < 1:
        raise ConfigError("--threads must be positive")
    out = args.out or config.output_dir
    summary = simulate(config, out, workers=args.threads, record_timing=args.record_timing,
                       allow_partial=args.allow_partial)
    print(f"wrote {summary['rows']} rows to {out}/results.csv ({summary['gaps']} over-budget cells)")
    return EXIT_OK


def _bounds(args) -> int:
    if args.config:
        config = load_config(args.config)
        shape, etas = config.shape, config.eta_grid
    else:
        if None in (args.K, args.Kstar, args.M) or not args.eta1:
            raise ConfigError("bounds needs --config or all of --K --Kstar --M --eta1")
        shape = shape_from_args(args.K, args.Kstar, None, args.M)
        etas = [Hyper(e, args.eta2) for e in args.eta1]
    if not shape.redundant:
        raise ConfigError("bounds need K > Kstar")
    for rec in bounds_table(shape, etas, args.out):
        print(" ".join(f"{k}={v:g}" for k, v in rec.items()))
    return EXIT_OK


def _fisher(args) -> int:
    true, shape = load_fixture(args.model)
    doc = fisher_summary(true, shape, args.Kt, args.out)
    if doc["singular"]:
        print(f"singular Fisher matrices (condition numbers {doc['conditions']})", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"c_n1={doc['c_n1']:.12g} c_n2={doc['c_n2']:.12g}")
    return EXIT_OK


def _fit(args) -> int:
    doc = fit_results(args.results, args.kind, args.model, args.out, args.eta1, args.eta2)
    f = doc["fit"]
    print(f"lambda={f['lambda_hat']:.6g} se={f['lambda_stderr']:.3g} residual_rms={f['residual_rms']:.3g}")
    return EXIT_OK


def _report(args) -> int:
    run_dir = args.run_dir or args.out
    if not run_dir:
        raise ConfigError("report needs a run directory")
    rep = write_report(run_dir)
    for c in rep.checks:
        print(f"{c.outcome} {c.claim} {c.detail}".rstrip())
    if not rep.sections:
        print("no artifacts found: " + ", ".join(rep.missing), file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_INVARIANT if rep.failed else EXIT_OK


COMMANDS = {"simulate": _simulate, "bounds": _bounds, "fisher": _fisher, "fit": _fit, "report": _report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, ShapeError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
