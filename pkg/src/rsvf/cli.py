"""Command-line entry point: ``rsvf solve | experiment | summarize``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench
from .errors import InvalidInputError


def _load_config(args):
    config = bench.ExperimentConfig.load(args.config) if args.config else bench.ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.delta is not None:
        overrides["delta"] = args.delta
    if getattr(args, "method", None):
        overrides["methods"] = [args.method]
    if overrides:
        config = bench.ExperimentConfig.from_dict({**config.to_dict(), **overrides})
    return config


def _write(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_solve(args):
    config = _load_config(args)
    method = config.methods[0]
    problem, settings = bench.make_problem(config)
    n = config.n_grid[0]
    traces, solutions = [], {}
    record = bench.run_replication(problem, settings, config, n, 0, traces, solutions)[method]
    report = {
        "problem": config.problem, "method": method, "n_per_cell": n,
        "safe_estimate": record.safe_estimate, "realized_return": record.realized_return,
        "true_optimal": record.true_optimal,
    }
    if method in solutions:
        report["policy"] = [int(a) for a in solutions[method].policy]
    if traces:
        report["rsvf_terminated_by"] = traces[-1][2].terminated_by
    _write(json.dumps(report, indent=2) + "\n", args.out)
    return 1 if record.failed else 0


def cmd_experiment(args):
    config = _load_config(args)
    traces = []
    built = bench.make_problem(config)
    records = bench.run_experiment(config, traces, problem=built)
    _write(bench.records_to_csv(records), args.out)
    if args.out:
        meta = bench.experiment_metadata(config, traces, built[0])
        Path(str(args.out) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return 0


def cmd_summarize(args):
    records = bench.read_records(args.records)
    _write(bench.summary_to_csv(bench.summarize(records)), args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="rsvf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, method=True):
        p.add_argument("--config", help="JSON experiment configuration")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--delta", type=float, help="confidence level override")
        p.add_argument("--out", help="output path (default: stdout)")
        if method:
            p.add_argument("--method", choices=bench.METHODS)

    p = sub.add_parser("solve", help="solve one problem with one method")
    common(p)
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("experiment", help="run the full grid from a config")
    common(p)
    p.set_defaults(func=cmd_experiment)
    p = sub.add_parser("summarize", help="records CSV -> summary CSV")
    p.add_argument("records", help="records CSV written by 'experiment'")
    p.add_argument("--out", help="output path (default: stdout)")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidInputError, OSError, json.JSONDecodeError) as exc:
        print(f"rsvf: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
