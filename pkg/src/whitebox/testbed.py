"""Noiseless BBOB functions F01, F02 and F05-F14.

Definitions follow the published BBOB noiseless suite. Instances are
generated from ``numpy.random.default_rng`` keyed on (function, dimension,
seed), so they are reproducible but not bit-compatible with COCO.

>>> p = make_problem("F02", 4, seed=1)
>>> abs(evaluate(p, p.x_opt) - p.f_opt) < 1e-9
True
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

FUNCTION_IDS = ("F01", "F02", "F05", "F06", "F07", "F08",
                "F09", "F10", "F11", "F12", "F13", "F14")

#: Reported condition numbers of the studied functions.
CONDITION_NUMBERS = {
    "F01": 1.0, "F02": 1e6, "F05": 1.0, "F06": 1e3, "F07": 1e2, "F08": 1e2,
    "F09": 1e2, "F10": 1e6, "F11": 1e6, "F12": 1e6, "F13": 1e2, "F14": 1e4,
}

NAMES = {
    "F01": "sphere", "F02": "separable ellipsoid", "F05": "linear slope",
    "F06": "attractive sector", "F07": "step ellipsoid", "F08": "Rosenbrock",
    "F09": "rotated Rosenbrock", "F10": "rotated ellipsoid", "F11": "discus",
    "F12": "bent cigar", "F13": "sharp ridge", "F14": "different powers",
}

MIN_DIMENSION = 2
MAX_DIMENSION = 40
BOX = (-5.0, 5.0)

_ID_RE = re.compile(r"^F(\d{1,2}):D(\d+):s(\d+)$")


class UnknownProblemError(ValueError):
    pass


def _canonical_id(fid) -> str:
    if isinstance(fid, (int, np.integer)):
        fid = f"F{int(fid):02d}"
    m = re.fullmatch(r"[Ff](\d{1,2})", str(fid).strip())
    if not m:
        raise UnknownProblemError(f"unknown problem {fid!r}")
    fid = f"F{int(m.group(1)):02d}"
    if fid not in FUNCTION_IDS:
        raise UnknownProblemError(f"unknown problem {fid!r}")
    return fid


@dataclass(frozen=True)
class ProblemInstance:
    id: str
    dimension: int
    seed: int
    x_opt: np.ndarray
    f_opt: float
    plain_quadratic: bool = False
    nonlinear: bool = True
    rotation_r: np.ndarray = field(default=None, repr=False)
    rotation_q: np.ndarray = field(default=None, repr=False)

    @property
    def bounds(self) -> np.ndarray:
        return np.tile(np.array(BOX, dtype=float), (self.dimension, 1))

    @property
    def lower(self) -> np.ndarray:
        return np.full(self.dimension, BOX[0])

    @property
    def upper(self) -> np.ndarray:
        return np.full(self.dimension, BOX[1])

    @property
    def condition_number(self) -> float:
        return CONDITION_NUMBERS[self.id]

    @property
    def tag(self) -> str:
        return f"{self.id}:D{self.dimension}:s{self.seed}"

    def __call__(self, x) -> float:
        return evaluate(self, x)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": NAMES[self.id],
            "dimension": self.dimension,
            "seed": self.seed,
            "plain_quadratic": self.plain_quadratic,
            "nonlinear": self.nonlinear,
            "bounds": self.bounds.tolist(),
            "x_opt": self.x_opt.tolist(),
            "f_opt": self.f_opt,
            "condition_number": self.condition_number,
            "rotation_r": self.rotation_r.tolist(),
            "rotation_q": self.rotation_q.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def parse_problem_id(text: str) -> tuple[str, int, int]:
    """Split ``"F02:D10:s3"`` into ``("F02", 10, 3)``."""
    m = _ID_RE.match(text.strip())
    if not m:
        raise UnknownProblemError(f"unknown problem {text!r} (expected e.g. F02:D10:s1)")
    return _canonical_id(int(m.group(1))), int(m.group(2)), int(m.group(3))


def problem_from_id(text: str, plain_quadratic: bool = False) -> ProblemInstance:
    fid, dim, seed = parse_problem_id(text)
    return make_problem(fid, dim, seed, plain_quadratic=plain_quadratic)


def _rotation(rng: np.random.Generator, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def _lambda(alpha: float, dim: int) -> np.ndarray:
    return alpha ** (0.5 * np.arange(dim) / (dim - 1))


def make_problem(fid, dimension: int, seed: int = 1, plain_quadratic: bool = False,
                 nonlinear: bool = True) -> ProblemInstance:
    """Build a reproducible instance of one of the twelve test functions.

    ``plain_quadratic`` disables the oscillation/asymmetry transforms and
    the rotations, which turns F02/F10 into exact axis-parallel quadratics.
    ``nonlinear=False`` only drops the transforms and keeps the rotations,
    leaving the bare (rotated) quadratic core of F10-F12.
    """
    fid = _canonical_id(fid)
    dimension = int(dimension)
    if not MIN_DIMENSION <= dimension <= MAX_DIMENSION:
        raise UnknownProblemError(
            f"unsupported dimension {dimension} (allowed {MIN_DIMENSION}..{MAX_DIMENSION})"
        )
    seed = int(seed)
    rng = np.random.default_rng([int(fid[1:]), dimension, seed])
    x_opt = rng.uniform(-4.0, 4.0, dimension)
    # Cauchy-like draw, rounded and clamped, as in the BBOB generator
    f_opt = float(np.clip(np.round(100.0 * rng.standard_normal() / rng.standard_normal()) / 100.0,
                          -1000.0, 1000.0))
    if plain_quadratic:
        r_mat = q_mat = np.eye(dimension)
    else:
        r_mat = _rotation(rng, dimension)
        q_mat = _rotation(rng, dimension)

    if fid == "F05":
        x_opt = 5.0 * np.where(x_opt >= 0, 1.0, -1.0)
    elif fid == "F08":
        x_opt = 0.75 * x_opt
    elif fid == "F09":
        scale = max(1.0, np.sqrt(dimension) / 8.0)
        x_opt = r_mat.T @ np.full(dimension, 0.5 / scale)

    for a in (x_opt, r_mat, q_mat):
        a.setflags(write=False)
    return ProblemInstance(id=fid, dimension=dimension, seed=seed, x_opt=x_opt, f_opt=f_opt,
                           plain_quadratic=plain_quadratic,
                           nonlinear=nonlinear and not plain_quadratic,
                           rotation_r=r_mat, rotation_q=q_mat)


def t_osz(x) -> np.ndarray:
    """Oscillation transform: monotone, sign preserving, ``t_osz(0) == 0``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    nz = x != 0
    xh = np.log(np.abs(x[nz]))
    pos = x[nz] > 0
    c1 = np.where(pos, 10.0, 5.5)
    c2 = np.where(pos, 7.9, 3.1)
    out[nz] = np.sign(x[nz]) * np.exp(xh + 0.049 * (np.sin(c1 * xh) + np.sin(c2 * xh)))
    return out


def t_asy(x, beta: float) -> np.ndarray:
    """Asymmetry transform applied to rows of ``x``."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    expo = 1.0 + beta * (np.arange(d) / (d - 1)) * np.sqrt(np.maximum(x, 0.0))
    return np.where(x > 0, np.power(np.maximum(x, 0.0), expo), x)


def _penalty(x: np.ndarray) -> np.ndarray:
    return np.sum(np.maximum(0.0, np.abs(x) - 5.0) ** 2, axis=-1)


def _rosenbrock(z: np.ndarray) -> np.ndarray:
    return np.sum(100.0 * (z[:, :-1] ** 2 - z[:, 1:]) ** 2 + (z[:, :-1] - 1.0) ** 2, axis=-1)


def _batch(p: ProblemInstance, x: np.ndarray) -> np.ndarray:
    d = p.dimension
    smooth = not p.nonlinear
    osz = (lambda v: v) if smooth else t_osz
    R, Q = p.rotation_r, p.rotation_q
    i = np.arange(d)
    fid = p.id

    if fid == "F01":
        f = np.sum((x - p.x_opt) ** 2, axis=1)
    elif fid == "F02":
        f = osz(x - p.x_opt) ** 2 @ (10.0 ** (6.0 * i / (d - 1)))
    elif fid == "F05":
        s = np.sign(p.x_opt) * 10.0 ** (i / (d - 1))
        z = np.where(p.x_opt * x < 25.0, x, p.x_opt)
        f = np.sum(5.0 * np.abs(s) - s * z, axis=1)
    elif fid == "F06":
        z = (x - p.x_opt) @ (Q @ np.diag(_lambda(10.0, d)) @ R).T
        s = np.where(z * p.x_opt > 0, 100.0, 1.0)
        inner = np.sum((s * z) ** 2, axis=1)
        f = osz(inner) ** 0.9
    elif fid == "F07":
        zh = (x - p.x_opt) @ (np.diag(_lambda(10.0, d)) @ R).T
        zt = np.where(np.abs(zh) > 0.5, np.floor(0.5 + zh), np.floor(0.5 + 10.0 * zh) / 10.0)
        z = zt @ Q.T
        f = 0.1 * np.maximum(np.abs(zh[:, 0]) / 1e4, z ** 2 @ (10.0 ** (2.0 * i / (d - 1))))
        f = f + _penalty(x)
    elif fid == "F08":
        z = max(1.0, np.sqrt(d) / 8.0) * (x - p.x_opt) + 1.0
        f = _rosenbrock(z)
    elif fid == "F09":
        z = max(1.0, np.sqrt(d) / 8.0) * (x @ R.T) + 0.5
        f = _rosenbrock(z)
    elif fid == "F10":
        z = osz((x - p.x_opt) @ R.T)
        f = z ** 2 @ (10.0 ** (6.0 * i / (d - 1)))
    elif fid == "F11":
        z = osz((x - p.x_opt) @ R.T)
        f = 1e6 * z[:, 0] ** 2 + np.sum(z[:, 1:] ** 2, axis=1)
    elif fid == "F12":
        y = (x - p.x_opt) @ R.T
        if not smooth:
            y = t_asy(y, 0.5)
        z = y @ R.T
        f = z[:, 0] ** 2 + 1e6 * np.sum(z[:, 1:] ** 2, axis=1)
    elif fid == "F13":
        z = (x - p.x_opt) @ (Q @ np.diag(_lambda(10.0, d)) @ R).T
        f = z[:, 0] ** 2 + 100.0 * np.sqrt(np.sum(z[:, 1:] ** 2, axis=1))
    elif fid == "F14":
        z = (x - p.x_opt) @ R.T
        f = np.sqrt(np.sum(np.abs(z) ** (2.0 + 4.0 * i / (d - 1)), axis=1))
    else:  # pragma: no cover - guarded by make_problem
        raise UnknownProblemError(fid)
    return f + p.f_opt


def evaluate(problem: ProblemInstance, x) -> float:
    """Objective value at a single point. Points outside the box are fine."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.dimension,):
        raise ValueError(f"expected a point of dimension {problem.dimension}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point must be finite")
    return float(_batch(problem, x[None, :])[0])


def evaluate_batch(problem: ProblemInstance, xs) -> np.ndarray:
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if xs.shape[1] != problem.dimension:
        raise ValueError(f"expected points of dimension {problem.dimension}, got {xs.shape}")
    if not np.all(np.isfinite(xs)):
        raise ValueError("points must be finite")
    return _batch(problem, xs)


class CountingObjective:
    """Evaluation counter and incumbent tracker around an objective.

    Single writer: use :meth:`evaluate_batch` to farm out evaluations to an
    executor; results are merged in submission order so counts and the
    incumbent do not depend on completion order.
    """

    def __init__(self, f: Callable[[np.ndarray], float] | ProblemInstance,
                 f_opt: Optional[float] = None):
        self.f = f
        self.problem = f if isinstance(f, ProblemInstance) else None
        self.f_opt = f_opt if f_opt is not None else (self.problem.f_opt if self.problem else 0.0)
        self.eval_count = 0
        self.best_x: Optional[np.ndarray] = None
        self.best_f = np.inf

    def _record(self, x: np.ndarray, fx: float) -> None:
        if not np.isfinite(fx):
            raise FloatingPointError(f"objective returned {fx} at {x.tolist()}")
        self.eval_count += 1
        if fx < self.best_f:
            self.best_f = fx
            self.best_x = x.copy()

    def __call__(self, x) -> float:
        x = np.array(x, dtype=float)
        fx = float(self.f(x))
        self._record(x, fx)
        return fx

    def evaluate_batch(self, xs: Sequence | np.ndarray, executor=None) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if executor is not None:
            values = np.fromiter(executor.map(self.f, list(xs)), dtype=float, count=len(xs))
        elif self.problem is not None:
            values = evaluate_batch(self.problem, xs)
        else:
            values = np.array([float(self.f(x)) for x in xs])
        for x, fx in zip(xs, values):
            self._record(x, float(fx))
        return values

    @property
    def best_error(self) -> float:
        return self.best_f - self.f_opt


def iter_problems(ids: Iterable[str], dimension: int, seeds: Iterable[int]):
    for fid in ids:
        for s in seeds:
            yield make_problem(fid, dimension, s)
