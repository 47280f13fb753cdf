"""Online whitening of an objective around the incumbent.

Row-vector convention: a point ``x`` of the whitened search space maps to
the displacement ``(x - center) @ m`` in the objective's space, i.e.
``m.T @ (x - center)``. With ``m = inverse_sqrt(H)`` the whitened function

    g(x) = f(center + (x - center) @ m)

has Hessian ``m @ H @ m.T == I`` at the center, which is the property the
transform is built for. Both spaces share the center, so the incumbent is
a fixed point of the map.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from . import rbf
from .archive import Archive
from .hessian import HessianEstimate, estimate_hessian
from .linalg import inverse_sqrt

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WhiteningTransform:
    m: np.ndarray
    center: np.ndarray

    @property
    def dimension(self) -> int:
        return self.center.size

    @property
    def is_singular(self) -> bool:
        return np.linalg.matrix_rank(self.m) < self.dimension

    def null_directions(self) -> np.ndarray:
        """Orthonormal basis (columns) of objective-space directions the map cannot reach."""
        return scipy.linalg.null_space(self.m)

    def to_objective_space(self, x) -> np.ndarray:
        return self.center + apply(self, x)

    def to_search_space(self, u) -> np.ndarray:
        return pull_back(self, np.asarray(u, dtype=float) - self.center)


def _check_dim(t: WhiteningTransform, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != t.dimension:
        raise ValueError(f"expected dimension {t.dimension}, got {x.shape[-1]}")
    return x


def apply(transform: WhiteningTransform, x) -> np.ndarray:
    """``(x - center) @ m``; accepts one point or a batch of rows."""
    x = _check_dim(transform, x)
    return (x - transform.center) @ transform.m


def pull_back(transform: WhiteningTransform, y) -> np.ndarray:
    """Inverse of :func:`apply`: ``center + y @ m^{-1}``.

    For singular ``m`` the minimum-norm pre-image is returned.
    """
    y = _check_dim(transform, y)
    if transform.is_singular:
        logger.warning("whitening matrix is singular; returning minimum-norm pre-image")
        inv = np.linalg.pinv(transform.m)
    else:
        inv = np.linalg.inv(transform.m)
    return transform.center + y @ inv


class WhitenedObjective:
    """``g(x) = f(center + (x - center) @ m)``; one f-evaluation per call."""

    def __init__(self, base: Callable, transform: WhiteningTransform):
        self.base = base
        self.transform = transform

    def __call__(self, x) -> float:
        return self.base(self.transform.to_objective_space(x))

    def evaluate_batch(self, xs, executor=None) -> np.ndarray:
        us = self.transform.to_objective_space(np.atleast_2d(xs))
        if hasattr(self.base, "evaluate_batch"):
            return self.base.evaluate_batch(us, executor=executor)
        return np.array([float(self.base(u)) for u in us])


@dataclass
class WhiteningResult:
    transform: WhiteningTransform
    g_archive: Archive
    surrogate: Optional[rbf.RbfModel]
    new_best: tuple[np.ndarray, float]
    hessian: HessianEstimate
    probes: np.ndarray  # objective-space points behind g_archive

    @property
    def evals_used(self) -> int:
        return self.hessian.evals_used + len(self.g_archive)


def build_whitening(
    f,
    archive: Archive,
    x_best=None,
    f_best: float | None = None,
    *,
    bounds=None,
    step: float | None = None,
    richardson_levels: int = 2,
    fit_surrogate: Callable[[np.ndarray, np.ndarray, WhiteningTransform], rbf.RbfModel] | None = None,
    executor=None,
) -> WhiteningResult:
    """Whiten ``f`` at the incumbent and fit a surrogate of the whitened function.

    1. Hessian ``H`` of ``f`` at ``x_best``.
    2. ``m = inverse_sqrt(H)``.
    3. Incumbent updated from the Hessian samples.
    4. ``g`` centered at the (possibly new) incumbent.
    5. Every archive point re-evaluated on ``g``.
    6. Surrogate fitted on the re-evaluated set.

    ``f`` should be a counting objective so that every evaluation is
    accounted for; the total cost is ``hessian.evals_used + len(archive)``.
    An incumbent found outside the archive (e.g. an earlier probe) may be
    passed as ``x_best`` together with its known value ``f_best``.
    A custom ``fit_surrogate(points, values, transform)`` also receives the
    transform, whose center is only known after step 3.
    Hessian and surrogate failures propagate.
    """
    if not len(archive):
        raise ValueError("archive is empty")
    if x_best is None:
        x_best, f_best = archive.best()
    else:
        x_best = np.asarray(x_best, dtype=float)
        if f_best is None:
            hits = np.flatnonzero(np.all(archive.points == x_best, axis=1))
            if not hits.size:
                raise ValueError("x_best is not in the archive; pass f_best")
            f_best = float(archive.values[hits[0]])

    est = estimate_hessian(f, x_best, step=step, richardson_levels=richardson_levels,
                           executor=executor)
    m = inverse_sqrt(est.h)

    best_x, best_f = x_best.copy(), f_best
    for p, v in est.samples:
        if v < best_f:
            best_x, best_f = np.array(p, dtype=float), v

    transform = WhiteningTransform(m=m, center=best_x)
    g = WhitenedObjective(f, transform)
    probes = transform.to_objective_space(archive.points)
    g_values = g.evaluate_batch(archive.points, executor=executor)
    g_archive = Archive(archive.dim, archive.points.copy(), g_values)
    for u, v in zip(probes, g_values):
        if v < best_f:
            best_x, best_f = u.copy(), float(v)

    if fit_surrogate is None:
        surrogate = rbf.fit(g_archive.points, g_archive.values, bounds=bounds)
    else:
        surrogate = fit_surrogate(g_archive.points, g_archive.values, transform)
    return WhiteningResult(transform=transform, g_archive=g_archive, surrogate=surrogate,
                           new_best=(best_x, best_f), hessian=est, probes=probes)
