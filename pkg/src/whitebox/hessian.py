"""Finite-difference Hessian with one Richardson extrapolation step.

Stencil per step size ``h`` (levels use ``h`` and ``h/2``):

* diagonal: ``x +- h e_i`` and ``x +- 3h e_i``. The even parts give
  ``f_ii ~ [E(3h) - E(h)] / (4 h^2)`` without needing ``f(x)``;
* off-diagonal: the four corners ``x +- h e_i +- h e_j``.

Both estimates have an ``O(h^2)`` leading error, removed by combining the
two levels as ``(4 H(h/2) - H(h)) / 3``. Two levels cost exactly
``4D + 4D^2`` evaluations; more levels would exceed that budget and are
rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

MAX_LEVELS = 2


class HessianError(RuntimeError):
    pass


@dataclass(frozen=True)
class HessianEstimate:
    h: np.ndarray
    evals_used: int
    samples: list  # (point, value) pairs in evaluation order

    @property
    def condition_number(self) -> float:
        s = np.linalg.svd(self.h, compute_uv=False)
        return float(s[0] / s[-1]) if s[-1] > 0 else np.inf


def default_step(x) -> float:
    return 1e-4 * (1.0 + float(np.max(np.abs(x))))


def budget(dim: int) -> int:
    return 4 * dim + 4 * dim * dim


def _check(x, step, levels) -> tuple[np.ndarray, float, int]:
    x = np.asarray(x, dtype=float).ravel()
    if step is None:
        step = default_step(x)
    if not step > 0:
        raise ValueError("step must be positive")
    if levels not in range(1, MAX_LEVELS + 1):
        raise ValueError(f"richardson_levels must be 1..{MAX_LEVELS}")
    return x, float(step), int(levels)


def hessian_batch_points(x, step: float | None = None, richardson_levels: int = 2) -> np.ndarray:
    """All stencil points, in the order :func:`estimate_hessian` evaluates them."""
    x, step, levels = _check(x, step, richardson_levels)
    d = x.size
    eye = np.eye(d)
    pts = []
    for level in range(levels):
        h = step / 2 ** level
        for i in range(d):
            for off in (h, -h, 3 * h, -3 * h):
                pts.append(x + off * eye[i])
        for i in range(d):
            for j in range(i + 1, d):
                for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    pts.append(x + h * (si * eye[i] + sj * eye[j]))
    return np.array(pts)


def assemble_hessian(x, step, richardson_levels, samples) -> np.ndarray:
    """Build the symmetric Hessian from evaluated stencil points.

    ``samples`` is a sequence of ``(point, value)`` pairs or a mapping; it
    may be in any order, values are matched to stencil points by identity.
    """
    x, step, levels = _check(x, step, richardson_levels)
    pairs = samples.items() if isinstance(samples, Mapping) else samples
    lookup = {np.asarray(p, dtype=float).tobytes(): float(v) for p, v in pairs}
    pts = hessian_batch_points(x, step, levels)
    try:
        vals = np.array([lookup[p.tobytes()] for p in pts])
    except KeyError as exc:
        raise HessianError("missing stencil evaluation") from exc

    d = x.size
    per_level = 2 * d + 2 * d * d
    estimates = []
    for level in range(levels):
        h = step / 2 ** level
        v = vals[level * per_level:(level + 1) * per_level]
        diag = v[:4 * d].reshape(d, 4)
        hl = np.zeros((d, d))
        e1 = 0.5 * (diag[:, 0] + diag[:, 1])
        e3 = 0.5 * (diag[:, 2] + diag[:, 3])
        hl[np.diag_indices(d)] = (e3 - e1) / (4 * h * h)
        k = 4 * d
        for i in range(d):
            for j in range(i + 1, d):
                pp, pm, mp, mm = v[k:k + 4]
                hl[i, j] = hl[j, i] = (pp - pm - mp + mm) / (4 * h * h)
                k += 4
        estimates.append(hl)
    h_est = estimates[0] if levels == 1 else (4.0 * estimates[1] - estimates[0]) / 3.0
    return 0.5 * (h_est + h_est.T)


def estimate_hessian(
    f: Callable[[np.ndarray], float],
    x,
    step: float | None = None,
    richardson_levels: int = 2,
    executor=None,
) -> HessianEstimate:
    """Numerical Hessian of ``f`` at ``x``.

    If ``f`` has an ``evaluate_batch`` method (e.g. a counting objective)
    the stencil is handed over as one batch; otherwise it is evaluated
    point by point, or through ``executor.map`` when given.
    """
    x, step, levels = _check(x, step, richardson_levels)
    pts = hessian_batch_points(x, step, levels)
    if hasattr(f, "evaluate_batch"):
        vals = np.asarray(f.evaluate_batch(pts, executor=executor), dtype=float)
    elif executor is not None:
        vals = np.fromiter(executor.map(f, list(pts)), dtype=float, count=len(pts))
    else:
        vals = np.array([float(f(p)) for p in pts])
    bad = ~np.isfinite(vals)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise HessianError(f"non-finite function value {vals[k]} at {pts[k].tolist()}")
    samples = list(zip(pts, vals.tolist()))
    h = assemble_hessian(x, step, levels, samples)
    return HessianEstimate(h=h, evals_used=len(pts), samples=samples)
