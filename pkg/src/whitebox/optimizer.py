"""Sequential RBF-surrogate optimizer, its online-whitening variant, and DE.

Iteration accounting: iteration 0 is the initial design. Afterwards each
infill, each whitening call and each DE generation is one iteration, no
matter how many evaluations it needs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import cdist
from scipy.stats import qmc

from . import rbf
from .archive import Archive
from .hessian import HessianError
from .files import atomic_write_text
from .linalg import LinalgError
from .testbed import CountingObjective, ProblemInstance
from .whitening import WhiteningTransform, build_whitening

logger = logging.getLogger(__name__)

EVENTS = ("init", "infill", "ow_hessian", "ow_reeval")
SOLVERS = ("sacobra", "sacobra-ow", "de")
THINNING_RADII = (1e-10, 1e-8, 1e-6, 1e-4, 1e-3)
JITTER = 1e-9
NULL_PERTURBATION = 1e-6
DE_F = 0.8
DE_CR = 0.9


class SurrogateFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    """Run settings. Counts left as ``None`` take their dimension-scaled default."""

    dimension: int
    budget_iters: int
    budget_evals: Optional[int] = None
    seed: int = 1
    init_pop: Optional[int] = None
    max_pop: Optional[int] = None
    ow_first_iter: Optional[int] = None
    ow_period: int = 10
    infill_restarts: int = 10
    de_pop: Optional[int] = None
    hessian_step: Optional[float] = None

    def __post_init__(self):
        d = self.dimension
        defaults = {"init_pop": 4 * d, "max_pop": 50 * d, "ow_first_iter": 20 * d, "de_pop": 10 * d}
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        if self.budget_iters < 1 or (self.budget_evals is not None and self.budget_evals < 1):
            raise ValueError("budgets must be positive")
        if self.init_pop < 2 * d + 1:
            raise ValueError(f"init_pop must be at least {2 * d + 1}")
        if self.ow_first_iter < self.init_pop:
            raise ValueError("ow_first_iter must be >= init_pop")
        if self.ow_period < 1 or self.infill_restarts < 1 or self.de_pop < 4:
            raise ValueError("ow_period, infill_restarts must be >= 1 and de_pop >= 4")

    @property
    def eval_cap(self) -> float:
        return np.inf if self.budget_evals is None else self.budget_evals

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    evals: int
    err: float
    event: str


@dataclass
class RunTrace:
    records: list[TraceRecord] = field(default_factory=list)
    x_best: Optional[np.ndarray] = None
    f_best: float = np.inf
    meta: dict = field(default_factory=dict)

    def append(self, it: int, evals: int, err: float, event: str) -> None:
        if event not in EVENTS:
            raise ValueError(f"unknown event {event!r}")
        if self.records:
            last = self.records[-1]
            if evals <= last.evals:
                raise ValueError("evaluation count must increase between records")
            err = min(err, last.err)
        self.records.append(TraceRecord(int(it), int(evals), float(err), event))

    def __len__(self) -> int:
        return len(self.records)

    @property
    def final_error(self) -> float:
        return self.records[-1].err

    @property
    def evals(self) -> int:
        return self.records[-1].evals

    @property
    def iters(self) -> int:
        return self.records[-1].iter

    def error_at(self, budget: float, accounting: str = "iterations") -> float:
        """Best-so-far error after spending ``budget`` (inf before the first record)."""
        key = budget_key(accounting)
        err = np.inf
        for r in self.records:
            if getattr(r, key) > budget:
                break
            err = r.err
        return err

    def to_jsonl(self) -> str:
        lines = []
        if self.meta or self.x_best is not None:
            meta = dict(self.meta)
            if self.x_best is not None:
                meta["x_best"] = [float(v) for v in self.x_best]
                meta["f_best"] = float(self.f_best)
            lines.append(json.dumps({"meta": meta}, sort_keys=True))
        lines.extend(json.dumps(asdict(r)) for r in self.records)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str, source: str = "<trace>") -> "RunTrace":
        trace = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if "meta" in obj:
                    trace.meta = dict(obj["meta"])
                    if "x_best" in trace.meta:
                        trace.x_best = np.array(trace.meta.pop("x_best"), dtype=float)
                        trace.f_best = float(trace.meta.pop("f_best"))
                    continue
                rec = TraceRecord(int(obj["iter"]), int(obj["evals"]), float(obj["err"]), str(obj["event"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise TraceFormatError(f"{source}:{lineno}: {exc}") from exc
            if trace.records and (rec.evals < trace.records[-1].evals or rec.iter < trace.records[-1].iter):
                raise TraceFormatError(f"{source}:{lineno}: budgets must not decrease")
            # foreign solvers may log raw errors; keep best-so-far semantics
            if trace.records:
                rec = replace(rec, err=min(rec.err, trace.records[-1].err))
            trace.records.append(rec)
        if not trace.records:
            raise TraceFormatError(f"{source}: no records")
        return trace

    def save(self, path) -> None:
        atomic_write_text(path, self.to_jsonl())

    @classmethod
    def load(cls, path) -> "RunTrace":
        path = Path(path)
        return cls.from_jsonl(path.read_text(), source=str(path))


class TraceFormatError(ValueError):
    pass


def budget_key(accounting: str) -> str:
    keys = {"evaluations": "evals", "iterations": "iter"}
    if accounting not in keys:
        raise ValueError(f"accounting must be one of {sorted(keys)}")
    return keys[accounting]


def initial_design(bounds, n: int, seed) -> np.ndarray:
    """Scrambled Latin hypercube of ``n`` points in the box."""
    bounds = np.asarray(bounds, dtype=float)
    sampler = qmc.LatinHypercube(d=bounds.shape[0], scramble=True, seed=np.random.default_rng(seed))
    return qmc.scale(sampler.random(n), bounds[:, 0], bounds[:, 1])


def _thin(dist: np.ndarray, values: np.ndarray, radius: float) -> np.ndarray:
    """Indices kept by a best-first greedy pass with spacing ``radius``."""
    removed = np.zeros(values.size, dtype=bool)
    kept = []
    for k in np.argsort(values, kind="stable"):
        if not removed[k]:
            kept.append(k)
            removed |= dist[k] < radius
    return np.sort(np.array(kept, dtype=int))


def fit_surrogate(points, values, bounds) -> rbf.RbfModel:
    """Fit, thinning clustered points (best first) if the system is degenerate."""
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    try:
        return rbf.fit(points, values, bounds)
    except (rbf.RbfFitError, LinalgError) as exc:
        first = exc
    bounds = np.asarray(bounds, dtype=float)
    z = (points - bounds.mean(axis=1)) / (0.5 * (bounds[:, 1] - bounds[:, 0]))
    dist = cdist(z, z, "chebyshev")
    for radius in THINNING_RADII:
        idx = _thin(dist, values, radius)
        if idx.size < 2 * points.shape[1] + 1:
            break
        if idx.size == points.shape[0] and radius > THINNING_RADII[0]:
            continue
        try:
            model = rbf.fit(points[idx], values[idx], bounds)
        except (rbf.RbfFitError, LinalgError):
            continue
        logger.info("surrogate refit on %d of %d points (radius %g)", idx.size, len(values), radius)
        return model
    raise SurrogateFitError(str(first)) from first


def _jitter_duplicates(x, points, lo, hi, rng) -> np.ndarray:
    half = 0.5 * (hi - lo)
    if points.size and np.min(np.max(np.abs(points - x) / half, axis=1)) < rbf.DUPLICATE_TOL:
        sign = np.where(x >= hi, -1.0, np.where(x <= lo, 1.0, rng.choice([-1.0, 1.0], size=x.size)))
        x = np.clip(x + sign * JITTER * half, lo, hi)
    return x


def propose_infill(surrogate: rbf.RbfModel, bounds, seed, restarts: int = 10) -> np.ndarray:
    """Approximate minimizer of the surrogate over the box.

    Multistart bound-constrained local search from the best training point
    and ``restarts - 1`` uniform random points. Surrogate evaluations are free.
    """
    bounds = np.asarray(bounds, dtype=float)
    lo, hi = bounds[:, 0], bounds[:, 1]
    rng = np.random.default_rng(seed)
    starts = [surrogate.points[int(np.argmin(surrogate.values))]]
    starts.extend(rng.uniform(lo, hi, size=(max(restarts - 1, 0), lo.size)))

    def fun(x):
        return rbf.predict_with_gradient(surrogate, x)

    best_x, best_v = None, np.inf
    for x0 in starts:
        res = minimize(fun, np.clip(x0, lo, hi), jac=True, method="L-BFGS-B",
                       bounds=list(zip(lo, hi)), options={"ftol": 1e-12, "gtol": 1e-8, "maxiter": 500})
        x = np.clip(res.x, lo, hi)
        v = surrogate(x)
        if v < best_v:
            best_x, best_v = x, v
    return _jitter_duplicates(best_x, surrogate.points, lo, hi, rng)


class _Run:
    """Shared state of one surrogate run."""

    def __init__(self, problem: ProblemInstance, config: OptimizerConfig, solver: str):
        if config.dimension != problem.dimension:
            raise ValueError("config dimension does not match the problem")
        self.problem = problem
        self.config = config
        self.bounds = problem.bounds
        self.f = CountingObjective(problem)
        self.archive = Archive(problem.dimension)
        self.trace = RunTrace(meta={"solver": solver, "problem": problem.tag, "seed": config.seed,
                                    "f_opt": problem.f_opt})

    def err(self) -> float:
        return self.f.best_f - self.problem.f_opt

    def record(self, it: int, event: str) -> None:
        self.trace.append(it, self.f.eval_count, self.err(), event)

    def rng(self, it: int) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, it])

    def evals_left(self) -> float:
        return self.config.eval_cap - self.f.eval_count

    def init(self) -> bool:
        n = self.config.init_pop
        if self.evals_left() < n:
            return False
        x0 = initial_design(self.bounds, n, [self.config.seed, 0])
        self.archive.extend(x0, self.f.evaluate_batch(x0))
        self.record(0, "init")
        return True

    def random_point(self, rng) -> np.ndarray:
        return rng.uniform(self.problem.lower, self.problem.upper)

    def plain_infill(self, it: int) -> None:
        rng = self.rng(it)
        try:
            model = fit_surrogate(self.archive.points, self.archive.values, self.bounds)
            x = propose_infill(model, self.bounds, rng, self.config.infill_restarts)
        except SurrogateFitError as exc:
            logger.warning("iteration %d: surrogate fit failed (%s); random point instead", it, exc)
            x = self.random_point(rng)
        self.archive.add(x, self.f(x))
        self.record(it, "infill")

    def finish(self) -> RunTrace:
        self.trace.x_best = self.f.best_x
        self.trace.f_best = self.f.best_f
        self.trace.meta["iters"] = self.trace.iters
        return self.trace

    def room(self, it: int) -> bool:
        return it <= self.config.budget_iters and len(self.archive) < self.config.max_pop


def run_sacobra(problem: ProblemInstance, config: OptimizerConfig) -> RunTrace:
    """Plain surrogate loop: fit, minimize the surrogate, evaluate, repeat."""
    run = _Run(problem, config, "sacobra")
    if not run.init():
        raise ValueError("evaluation budget smaller than the initial design")
    it = 1
    while run.room(it) and run.evals_left() >= 1:
        run.plain_infill(it)
        it += 1
    return run.finish()


class _WhitenedState:
    """g-archive and search box after a whitening call."""

    def __init__(self, transform: WhiteningTransform, g_archive: Archive, box: np.ndarray):
        self.transform = transform
        self.g_archive = g_archive
        self.box = box


def _g_box(transform: WhiteningTransform, bounds) -> np.ndarray:
    # the original box moved to the center: holds every g-archive input
    width = bounds[:, 1] - bounds[:, 0]
    return np.column_stack([transform.center - width, transform.center + width])


def _ow_call(run: _Run, it: int) -> Optional[_WhitenedState]:
    """One whitening iteration; returns None (after logging) on failure."""
    before_best = run.f.best_f
    x_best, f_best = run.f.best_x.copy(), run.f.best_f
    step = run.config.hessian_step
    if step is not None:
        step = step * (1.0 + float(np.max(np.abs(x_best))))
    try:
        res = build_whitening(run.f, run.archive, x_best, f_best, step=step,
                              fit_surrogate=lambda p, v, t: fit_surrogate(p, v, _g_box(t, run.bounds)))
    except (HessianError, SurrogateFitError, LinalgError, FloatingPointError) as exc:
        logger.warning("iteration %d: whitening failed (%s); plain iteration instead", it, exc)
        if run.f.eval_count > run.trace.evals:
            run.record(it, "ow_hessian")
        return None
    # split the two batches for the trace
    h_best = min([before_best] + [v for _, v in res.hessian.samples])
    n_h = run.trace.evals + res.hessian.evals_used
    run.trace.append(it, n_h, h_best - run.problem.f_opt, "ow_hessian")
    run.record(it, "ow_reeval")
    return _WhitenedState(res.transform, res.g_archive, _g_box(res.transform, run.bounds))


def _g_infill(run: _Run, state: _WhitenedState, it: int) -> None:
    rng = run.rng(it)
    t = state.transform
    try:
        model = fit_surrogate(state.g_archive.points, state.g_archive.values, state.box)
        xg = propose_infill(model, state.box, rng, run.config.infill_restarts)
        u = t.to_objective_space(xg)
        null = t.null_directions()
        if null.size:
            width = run.problem.upper - run.problem.lower
            u = u + NULL_PERTURBATION * (null @ rng.standard_normal(null.shape[1])) * width
        u = np.clip(u, run.problem.lower, run.problem.upper)
    except SurrogateFitError as exc:
        logger.warning("iteration %d: g-surrogate fit failed (%s); plain iteration instead", it, exc)
        run.plain_infill(it)
        _add_to_g(state, run.archive.points[-1], run.archive.values[-1])
        return
    fu = run.f(u)
    run.archive.add(u, fu)
    _add_to_g(state, u, fu)
    run.record(it, "infill")


def _add_to_g(state: _WhitenedState, u, fu) -> None:
    # with a singular map, points off its range have no pre-image carrying g = f(u)
    t = state.transform
    x = t.to_search_space(u)
    if np.allclose(t.to_objective_space(x), u, rtol=0, atol=1e-9 * (1 + np.abs(u).max())):
        state.g_archive.add(x, fu)


def run_sacobra_ow(problem: ProblemInstance, config: OptimizerConfig) -> RunTrace:
    """Surrogate loop with online whitening at ``ow_first_iter`` and every ``ow_period`` after."""
    run = _Run(problem, config, "sacobra-ow")
    if not run.init():
        raise ValueError("evaluation budget smaller than the initial design")
    d = problem.dimension
    state: Optional[_WhitenedState] = None
    it = 1
    while run.room(it):
        k = it - config.ow_first_iter
        if k >= 0 and k % config.ow_period == 0:
            if run.evals_left() < 4 * d + 4 * d * d + len(run.archive):
                break
            new = _ow_call(run, it)
            if new is not None:
                state = new
                it += 1
                continue
        if run.evals_left() < 1:
            break
        if state is None:
            run.plain_infill(it)
        else:
            _g_infill(run, state, it)
        it += 1
    return run.finish()


def _reflect(v: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    v = np.where(v < lo, 2 * lo - v, v)
    v = np.where(v > hi, 2 * hi - v, v)
    return np.clip(v, lo, hi)


def run_de(problem: ProblemInstance, config: OptimizerConfig, executor=None) -> RunTrace:
    """DE/rand/1/bin; one generation is one iteration."""
    d = problem.dimension
    npop = config.de_pop
    lo, hi = problem.lower, problem.upper
    f = CountingObjective(problem)
    trace = RunTrace(meta={"solver": "de", "problem": problem.tag, "seed": config.seed,
                           "f_opt": problem.f_opt})
    rng = np.random.default_rng([config.seed, 0xDE])
    if config.eval_cap < npop:
        raise ValueError("evaluation budget smaller than the DE population")
    pop = rng.uniform(lo, hi, size=(npop, d))
    fit = f.evaluate_batch(pop, executor=executor)
    trace.append(0, f.eval_count, f.best_f - problem.f_opt, "init")
    idx = np.arange(npop)
    for gen in range(1, config.budget_iters + 1):
        if config.eval_cap - f.eval_count < npop:
            break
        # r1, r2, r3 distinct and different from the target index
        r = np.empty((npop, 3), dtype=int)
        for i in idx:
            r[i] = rng.choice(np.delete(idx, i), size=3, replace=False)
        mutant = _reflect(pop[r[:, 0]] + DE_F * (pop[r[:, 1]] - pop[r[:, 2]]), lo, hi)
        cross = rng.random((npop, d)) < DE_CR
        cross[idx, rng.integers(0, d, size=npop)] = True
        trial = np.where(cross, mutant, pop)
        ft = f.evaluate_batch(trial, executor=executor)
        better = ft <= fit
        pop[better], fit[better] = trial[better], ft[better]
        trace.append(gen, f.eval_count, f.best_f - problem.f_opt, "infill")
    trace.x_best, trace.f_best = f.best_x, f.best_f
    trace.meta["iters"] = trace.iters
    return trace


RUNNERS = {"sacobra": run_sacobra, "sacobra-ow": run_sacobra_ow, "de": run_de}


def run_solver(solver: str, problem: ProblemInstance, config: OptimizerConfig) -> RunTrace:
    try:
        runner = RUNNERS[solver]
    except KeyError:
        raise ValueError(f"unknown solver {solver!r}; choose from {', '.join(SOLVERS)}") from None
    if config.dimension != problem.dimension:
        raise ValueError("config dimension does not match the problem")
    return runner(problem, config)


def median_final_error(traces: Iterable[RunTrace]) -> float:
    return float(np.median([t.final_error for t in traces]))
