"""Command-line interface: ``whitebox {run,campaign,profile,slice,inspect}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import harness, rbf
from .files import atomic_write_text
from .optimizer import SOLVERS, OptimizerConfig, RunTrace, TraceFormatError, initial_design, run_solver
from .testbed import UnknownProblemError, evaluate, problem_from_id

EXIT_MALFORMED = 1


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get("WHITEBOX_OUT") or ".")


def _problem(parser, text):
    try:
        return problem_from_id(text)
    except UnknownProblemError as exc:
        parser.error(str(exc))
    except ValueError as exc:
        parser.error(f"unknown problem {text!r}: {exc}")


def cmd_run(args, parser) -> int:
    problem = _problem(parser, args.problem)
    seed = problem.seed if args.seed is None else args.seed
    try:
        config = OptimizerConfig(dimension=problem.dimension, budget_iters=args.iters,
                                 budget_evals=args.evals, seed=seed)
    except ValueError as exc:
        parser.error(str(exc))
    trace = run_solver(args.solver, problem, config)
    trace.meta["config"] = config.to_dict()
    path = _out_dir(args) / harness.trace_filename(args.solver, problem.tag)
    trace.save(path)
    print(f"{args.solver} on {problem.tag}: final error {trace.final_error:.6g}, "
          f"{trace.evals} evaluations, {trace.iters} iterations")
    print(f"trace written to {path}")
    return 0


def cmd_campaign(args, parser) -> int:
    spec = harness.load_spec(args.spec)
    overrides = {k: v for k, v in (("tau", args.tau), ("accounting", args.accounting)) if v is not None}
    if overrides:
        spec = harness.CampaignSpec(**{**spec.__dict__, **overrides})
    report = harness.run_campaign(spec, _out_dir(args), jobs=args.jobs)
    print(f"{len(report.traces)} traces ({report.executed} executed), {len(report.failures)} failures")
    for p in report.files:
        print(f"wrote {p}")
    return 0 if not report.failures else EXIT_MALFORMED


def cmd_profile(args, parser) -> int:
    path = harness.profile_from_dir(args.traces, _out_dir(args), args.tau or harness.DEFAULT_TAU,
                                    args.accounting or "iterations")
    print(f"wrote {path}")
    return 0


def cmd_slice(args, parser) -> int:
    problem = _problem(parser, args.problem)
    d = problem.dimension
    if args.archive_size < 2 * d + 1:
        parser.error(f"--archive-size must be at least {2 * d + 1} in dimension {d}")
    axes = args.axis or list(range(1, d + 1))
    bad = [a for a in axes if not 1 <= a <= d]
    if bad:
        parser.error(f"axis {bad[0]} out of range 1..{d}")
    seed = problem.seed if args.seed is None else args.seed
    x = initial_design(problem.bounds, args.archive_size, [seed, 0])
    model = rbf.fit(x, [evaluate(problem, p) for p in x], bounds=problem.bounds)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["axis", "coordinate", "true_value", "model_value"])
    for a in axes:
        table = rbf.slice_diagnostic(model, problem, problem.x_opt, a - 1, tuple(problem.bounds[a - 1]),
                                     samples=args.samples)
        for row in table.rows():
            w.writerow([a, *(format(v, ".17g") for v in row)])
        print(f"axis {a}: relative error {table.relative_error():.4g}")
    path = _out_dir(args) / f"slice_{problem.id}_D{d}_s{problem.seed}_n{args.archive_size}.csv"
    atomic_write_text(path, buf.getvalue())
    print(f"wrote {path}")
    return 0


def cmd_inspect(args, parser) -> int:
    if args.problem:
        problem = _problem(parser, args.problem)
        print(problem.to_json())
        return 0
    if not args.trace:
        parser.error("give a trace file or --problem")
    trace = RunTrace.load(args.trace)
    print(json.dumps(trace.meta, indent=2, sort_keys=True))
    print(f"records {len(trace)}, iterations {trace.iters}, evaluations {trace.evals}, "
          f"final error {trace.final_error:.6g}")
    for event in ("init", "infill", "ow_hessian", "ow_reeval"):
        n = sum(r.event == event for r in trace.records)
        if n:
            print(f"  {event}: {n}")
    if trace.x_best is not None:
        print("x_best " + np.array2string(trace.x_best, precision=6, max_line_width=120))
    return 0


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="whitebox", description="Surrogate optimization with online whitening.")
    sub = parser.add_subparsers(dest="command", required=True)

    def out(p):
        p.add_argument("--out", metavar="DIR", help="output directory (default: $WHITEBOX_OUT or .)")

    def profile_flags(p):
        p.add_argument("--tau", type=_positive_float, default=None)
        p.add_argument("--accounting", choices=harness.ACCOUNTINGS, default=None)

    p = sub.add_parser("run", help="run one solver on one problem")
    p.add_argument("--problem", required=True, help="problem id such as F02:D10:s1")
    p.add_argument("--solver", required=True, choices=SOLVERS)
    p.add_argument("--iters", type=_positive_int, default=None, help="iteration budget (default 50D)")
    p.add_argument("--evals", type=_positive_int, default=None, help="evaluation budget")
    p.add_argument("--seed", type=int, default=None, help="run seed (default: the problem's seed)")
    out(p)
    p.set_defaults(func=cmd_run, cmd_parser=p)

    p = sub.add_parser("campaign", help="run a campaign spec and write reports")
    p.add_argument("spec", help="campaign spec file")
    p.add_argument("--jobs", type=_positive_int, default=1)
    profile_flags(p)
    out(p)
    p.set_defaults(func=cmd_campaign, cmd_parser=p)

    p = sub.add_parser("profile", help="data profile from a directory of traces")
    p.add_argument("traces", help="directory of <solver>__F02_D10_s3.jsonl files")
    profile_flags(p)
    out(p)
    p.set_defaults(func=cmd_profile, cmd_parser=p)

    p = sub.add_parser("slice", help="compare a fitted surrogate with the function along axes")
    p.add_argument("--problem", required=True)
    p.add_argument("--archive-size", type=_positive_int, default=60)
    p.add_argument("--axis", type=int, action="append", help="1-based axis; repeat for several (default all)")
    p.add_argument("--samples", type=_positive_int, default=101)
    p.add_argument("--seed", type=int, default=None)
    out(p)
    p.set_defaults(func=cmd_slice, cmd_parser=p)

    p = sub.add_parser("inspect", help="show a problem instance or summarize a trace file")
    p.add_argument("trace", nargs="?")
    p.add_argument("--problem")
    p.set_defaults(func=cmd_inspect, cmd_parser=p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run" and args.iters is None:
        args.iters = 50 * _problem(args.cmd_parser, args.problem).dimension
    try:
        return args.func(args, args.cmd_parser)
    except (harness.SpecError, TraceFormatError, harness.CampaignError) as exc:
        print(f"whitebox: error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError) as exc:
        print(f"whitebox: error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED


if __name__ == "__main__":
    sys.exit(main())
