"""Benchmark campaigns, data profiles and report files.

A data profile gives, for each budget ``alpha`` (in units of the problem
dimension), the fraction of problems a solver has solved to tolerance
``tau``. Every ``(problem, seed)`` pair counts as one problem.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import re
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .files import atomic_write_text
from .optimizer import RUNNERS, OptimizerConfig, RunTrace, TraceFormatError, budget_key, run_solver
from .testbed import make_problem, parse_problem_id

logger = logging.getLogger(__name__)

NOT_SOLVED = math.inf
ACCOUNTINGS = ("evaluations", "iterations")
DEFAULT_TAU = 0.01
_TRACE_NAME = re.compile(r"^(?P<solver>[\w.+-]+?)__F(?P<fid>\d{2})_D(?P<dim>\d+)_s(?P<seed>\d+)\.jsonl$")


class SpecError(ValueError):
    """Malformed campaign spec; the message carries ``file:line``."""


class CampaignError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProfilePoint:
    alpha: float
    fraction_solved: float


def solved_at(trace: RunTrace, tau: float, accounting: str = "iterations") -> float:
    """First budget at which the best-so-far error drops below ``tau``."""
    key = budget_key(accounting)
    for r in trace.records:
        if r.err < tau:
            return getattr(r, key)
    return NOT_SOLVED


def trace_dimension(trace: RunTrace) -> int:
    try:
        return parse_problem_id(trace.meta["problem"])[1]
    except KeyError:
        raise ValueError("trace has no problem tag in its metadata") from None


def data_profile(
    traces: Mapping[str, Sequence[RunTrace]], tau: float = DEFAULT_TAU, accounting: str = "iterations"
) -> dict[str, list[ProfilePoint]]:
    """Exact step function per solver, sampled at ``alpha = 0`` and every jump."""
    if not traces or any(len(v) == 0 for v in traces.values()):
        raise ValueError("data_profile needs at least one trace per solver")
    if not tau > 0:
        raise ValueError("tau must be positive")
    out = {}
    for solver in sorted(traces):
        runs = traces[solver]
        ratios = sorted(solved_at(t, tau, accounting) / trace_dimension(t) for t in runs)
        n = len(ratios)
        points = [ProfilePoint(0.0, sum(r <= 0 for r in ratios) / n)]
        for k, r in enumerate(ratios):
            if math.isinf(r) or r <= 0:
                continue
            if k + 1 < n and ratios[k + 1] == r:
                continue
            points.append(ProfilePoint(float(r), (k + 1) / n))
        out[solver] = points
    return out


def profile_value(points: Sequence[ProfilePoint], alpha: float) -> float:
    """``d(alpha)`` of a profile returned by :func:`data_profile`."""
    value = 0.0
    for p in points:
        if p.alpha > alpha:
            break
        value = p.fraction_solved
    return value


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else format(x, ".17g")


def profile_csv(profiles: Mapping[str, Sequence[ProfilePoint]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["solver", "alpha", "fraction_solved"])
    for solver in sorted(profiles):
        for p in profiles[solver]:
            w.writerow([solver, _fmt(p.alpha), _fmt(p.fraction_solved)])
    return buf.getvalue()


def profile_filename(tau: float, accounting: str) -> str:
    return f"profiles_{tau:g}_{accounting}.csv"


def trace_filename(solver: str, problem_tag: str) -> str:
    fid, dim, seed = parse_problem_id(problem_tag)
    return f"{solver}__{fid}_D{dim}_s{seed}.jsonl"


def load_trace_dir(directory) -> dict[str, list[RunTrace]]:
    """Traces named ``<solver>__F02_D10_s3.jsonl``, grouped by solver, in name order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory}: not a directory")
    grouped: dict[str, list[RunTrace]] = defaultdict(list)
    for path in sorted(directory.glob("*.jsonl")):
        m = _TRACE_NAME.match(path.name)
        if not m:
            raise TraceFormatError(f"{path}: name must look like <solver>__F02_D10_s3.jsonl")
        trace = RunTrace.load(path)
        trace.meta.setdefault("solver", m["solver"])
        trace.meta.setdefault("problem", f"F{m['fid']}:D{int(m['dim'])}:s{int(m['seed'])}")
        grouped[m["solver"]].append(trace)
    if not grouped:
        raise TraceFormatError(f"{directory}: no trace files")
    return dict(grouped)


# ---------------------------------------------------------------- campaign spec


@dataclass(frozen=True)
class CampaignSpec:
    problems: tuple[tuple[str, int, tuple[int, ...]], ...]
    solvers: tuple[str, ...]
    tau: float = DEFAULT_TAU
    accounting: str = "iterations"
    budget_iters: int = 500
    budget_evals: int | None = None
    trace_dir: str | None = None  # where foreign-solver traces live
    solver_options: Mapping[str, Mapping[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.problems or not self.solvers:
            raise ValueError("problems and solvers must be nonempty")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.accounting not in ACCOUNTINGS:
            raise ValueError(f"accounting must be one of {ACCOUNTINGS}")

    def problem_tags(self) -> list[str]:
        return [f"{fid}:D{d}:s{s}" for fid, d, seeds in self.problems for s in seeds]

    def config(self, solver: str, problem_tag: str) -> OptimizerConfig:
        _, dim, seed = parse_problem_id(problem_tag)
        opts = dict(self.solver_options.get(solver, {}))
        ints = {k: int(v) for k, v in opts.items() if k != "hessian_step"}
        if "hessian_step" in opts:
            ints["hessian_step"] = float(opts["hessian_step"])
        return OptimizerConfig(dimension=dim, budget_iters=self.budget_iters,
                               budget_evals=self.budget_evals, seed=seed, **ints)


_CONFIG_KEYS = {"init_pop", "max_pop", "ow_first_iter", "ow_period", "infill_restarts", "de_pop", "hessian_step"}


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def parse_spec(text: str, source: str = "<spec>") -> CampaignSpec:
    """Parse a flat ``key = value`` campaign file.

    Keys: ``problems`` (e.g. ``F01, F02``), ``dimensions`` (``10`` or
    ``5, 10``), ``seeds`` (``1-15``), ``solvers``, ``tau``, ``accounting``,
    ``iters``, ``evals``, ``traces`` and per-solver options such as
    ``sacobra-ow.ow_period = 5``. ``#`` starts a comment.
    """
    raw: dict[str, tuple[str, int]] = {}
    opts: dict[str, dict[str, float]] = defaultdict(dict)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if "." in key:
                solver, opt = key.split(".", 1)
                if opt not in _CONFIG_KEYS:
                    raise ValueError(f"unknown solver option {opt!r}")
                opts[solver][opt] = float(value)
                continue
            if key not in {"problems", "dimensions", "seeds", "solvers", "tau", "accounting",
                           "iters", "evals", "traces"}:
                raise ValueError(f"unknown key {key!r}")
            if key in raw:
                raise ValueError(f"duplicate key {key!r} (first on line {raw[key][1]})")
        except ValueError as exc:
            raise SpecError(f"{source}:{lineno}: {exc}") from None
        raw[key] = (value, lineno)

    def get(key, conv, default=None, required=False):
        if key not in raw:
            if required:
                raise SpecError(f"{source}: missing required key {key!r}")
            return default
        value, lineno = raw[key]
        try:
            return conv(value)
        except (ValueError, TypeError) as exc:
            raise SpecError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None

    def ids(value):
        out = []
        for part in value.split(","):
            part = part.strip().upper()
            parse_problem_id(f"{part}:D2:s1")  # validates the function id
            out.append(part)
        return out

    fids = get("problems", ids, required=True)
    dims = get("dimensions", _int_list, required=True)
    seeds = tuple(get("seeds", _int_list, default=[1]))
    solvers = get("solvers", lambda v: tuple(s.strip() for s in v.split(",") if s.strip()), required=True)
    try:
        return CampaignSpec(
            problems=tuple((fid, d, seeds) for d in dims for fid in fids),
            solvers=solvers,
            tau=get("tau", float, DEFAULT_TAU),
            accounting=get("accounting", str, "iterations"),
            budget_iters=get("iters", int, 500),
            budget_evals=get("evals", int, None),
            trace_dir=get("traces", str, None),
            solver_options={k: dict(v) for k, v in opts.items()},
        )
    except ValueError as exc:
        raise SpecError(f"{source}: {exc}") from None


def load_spec(path) -> CampaignSpec:
    path = Path(path)
    return parse_spec(path.read_text(), source=str(path))


# ---------------------------------------------------------------- execution


@dataclass
class CampaignReport:
    spec: CampaignSpec
    traces: dict[tuple[str, str], RunTrace]
    failures: dict[tuple[str, str], str]
    profiles: dict[str, list[ProfilePoint]]
    files: list[Path]
    executed: int = 0

    def by_solver(self) -> dict[str, list[RunTrace]]:
        out: dict[str, list[RunTrace]] = defaultdict(list)
        for (solver, _), t in sorted(self.traces.items()):
            out[solver].append(t)
        return dict(out)


def _execute(job: tuple[str, str, OptimizerConfig]) -> RunTrace:
    solver, tag, config = job
    fid, dim, seed = parse_problem_id(tag)
    trace = run_solver(solver, make_problem(fid, dim, seed), config)
    trace.meta["config"] = config.to_dict()
    return trace


def _cached(path: Path, config: OptimizerConfig | None) -> RunTrace | None:
    if not path.exists():
        return None
    try:
        trace = RunTrace.load(path)
    except (OSError, TraceFormatError) as exc:
        logger.warning("ignoring unreadable cached trace %s: %s", path, exc)
        return None
    if config is not None and trace.meta.get("config") != config.to_dict():
        return None
    return trace


def _unsolved_stub(tag: str) -> RunTrace:
    # placeholder so a failed run still counts as one unsolved problem
    t = RunTrace(meta={"problem": tag})
    t.append(0, 1, math.inf, "init")
    return t


def run_campaign(spec: CampaignSpec, out_dir, jobs: int = 1) -> CampaignReport:
    """Run (or load) every trace, then write profiles, convergence tables and a summary.

    Traces go to ``out_dir/traces``; existing traces made with the same
    configuration are reused, so an interrupted campaign resumes.
    """
    out_dir = Path(out_dir)
    trace_dir = out_dir / "traces"
    traces: dict[tuple[str, str], RunTrace] = {}
    failures: dict[tuple[str, str], str] = {}
    pending = []
    for solver in spec.solvers:
        for tag in spec.problem_tags():
            key = (solver, tag)
            if solver not in RUNNERS:
                src = Path(spec.trace_dir or trace_dir) / trace_filename(solver, tag)
                trace = _cached(src, None)
                if trace is None:
                    raise CampaignError(f"missing or unreadable foreign trace {src}")
                trace.meta.setdefault("problem", tag)
                traces[key] = trace
                continue
            config = spec.config(solver, tag)
            trace = _cached(trace_dir / trace_filename(solver, tag), config)
            if trace is None:
                pending.append((solver, tag, config))
            else:
                traces[key] = trace

    def done(job, result):
        solver, tag, _ = job
        if isinstance(result, BaseException):
            failures[(solver, tag)] = f"{type(result).__name__}: {result}"
            logger.error("%s on %s failed: %s", solver, tag, result)
            return
        result.save(trace_dir / trace_filename(solver, tag))
        traces[(solver, tag)] = result

    if jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [(job, pool.submit(_execute, job)) for job in pending]
            for job, fut in futures:
                exc = fut.exception()
                done(job, exc if exc is not None else fut.result())
    else:
        for job in pending:
            try:
                result = _execute(job)
            except Exception as exc:  # reported, not dropped
                result = exc
            done(job, result)

    grouped: dict[str, list[RunTrace]] = defaultdict(list)
    for solver in spec.solvers:
        for tag in spec.problem_tags():
            grouped[solver].append(traces.get((solver, tag)) or _unsolved_stub(tag))
    profiles = data_profile(grouped, spec.tau, spec.accounting)
    files = write_reports(spec, traces, failures, profiles, out_dir)
    return CampaignReport(spec, traces, failures, profiles, files, executed=len(pending))


def convergence_csv(rows: Iterable[tuple[str, int, RunTrace]], accounting: str) -> str:
    key = budget_key(accounting)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["solver", "seed", "budget", "error"])
    for solver, seed, trace in rows:
        for r in trace.records:
            w.writerow([solver, seed, getattr(r, key), _fmt(r.err)])
    return buf.getvalue()


def summary_text(spec: CampaignSpec, traces, failures, profiles) -> str:
    lines = [
        f"# tau={spec.tau:g} accounting={spec.accounting} iters={spec.budget_iters}"
        f" evals={spec.budget_evals if spec.budget_evals is not None else '-'}",
        "# each (problem, seed) pair counts as one problem in the profiles",
        f"{'solver':<12} {'problem':<8} {'runs':>4} {'solved':>6} {'median_err':>12} {'median_evals':>12}",
    ]
    for solver in spec.solvers:
        for fid, d, seeds in spec.problems:
            runs = [traces[(solver, f"{fid}:D{d}:s{s}")] for s in seeds
                    if (solver, f"{fid}:D{d}:s{s}") in traces]
            if not runs:
                lines.append(f"{solver:<12} {fid}_D{d:<4} {0:>4} {'-':>6} {'-':>12} {'-':>12}")
                continue
            solved = sum(solved_at(t, spec.tau, spec.accounting) < NOT_SOLVED for t in runs)
            err = float(np.median([t.final_error for t in runs]))
            ev = float(np.median([t.evals for t in runs]))
            lines.append(f"{solver:<12} {fid}_D{d:<4} {len(runs):>4} {solved:>6} {err:>12.4g} {ev:>12.0f}")
    lines.append("")
    for solver, pts in sorted(profiles.items()):
        final = pts[-1].fraction_solved
        lines.append(f"profile {solver}: d(50)={profile_value(pts, 50):.4g} d(inf)={final:.4g}")
    if failures:
        lines.append("")
        lines.append("failures:")
        lines.extend(f"  {s} {t}: {msg}" for (s, t), msg in sorted(failures.items()))
    return "\n".join(lines) + "\n"


def write_reports(spec, traces, failures, profiles, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    files = []
    path = out_dir / profile_filename(spec.tau, spec.accounting)
    atomic_write_text(path, profile_csv(profiles))
    files.append(path)
    for fid, d, seeds in spec.problems:
        rows = [(solver, s, traces[(solver, f"{fid}:D{d}:s{s}")])
                for solver in spec.solvers for s in seeds if (solver, f"{fid}:D{d}:s{s}") in traces]
        path = out_dir / f"convergence_{fid}_D{d}.csv"
        atomic_write_text(path, convergence_csv(rows, spec.accounting))
        files.append(path)
    path = out_dir / "summary.txt"
    atomic_write_text(path, summary_text(spec, traces, failures, profiles))
    files.append(path)
    return files


def profile_from_dir(trace_dir, out_dir, tau: float = DEFAULT_TAU, accounting: str = "iterations") -> Path:
    """Profile CSV for every trace file in ``trace_dir``."""
    grouped = load_trace_dir(trace_dir)
    path = Path(out_dir) / profile_filename(tau, accounting)
    atomic_write_text(path, profile_csv(data_profile(grouped, tau, accounting)))
    return path
