"""Cubic RBF surrogate with a per-coordinate quadratic tail.

The model is

    s(x) = sum_i theta_i * ||x - c_i||^3 + mu_0 + sum_j mu_j x_j + sum_j nu_j x_j^2

fitted by solving the usual saddle-point system with the orthogonality
condition ``P^T theta = 0``. Inputs are mapped affinely to ``[-1, 1]^D``
using box bounds before anything else happens.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist

from .linalg import DegenerateConfigurationError, solve_saddle  # noqa: F401  (re-exported)

TAIL_ORDER = 2
DUPLICATE_TOL = 1e-10
INTERP_RTOL = 1e-6
ORTHO_RTOL = 1e-8


class RbfFitError(ValueError):
    """Input rejected by :func:`fit`."""


class DuplicatePointsError(RbfFitError):
    pass


def _scaling(bounds, dim: int) -> tuple[np.ndarray, np.ndarray]:
    if bounds is None:
        return np.zeros(dim), np.ones(dim)
    bounds = np.asarray(bounds, dtype=float)
    if bounds.shape != (dim, 2):
        raise RbfFitError(f"bounds must have shape ({dim}, 2), got {bounds.shape}")
    lo, hi = bounds[:, 0], bounds[:, 1]
    if np.any(hi <= lo):
        raise RbfFitError("bounds must satisfy lower < upper")
    return 0.5 * (lo + hi), 0.5 * (hi - lo)


def tail_matrix(z: np.ndarray) -> np.ndarray:
    """Columns ``1, z_1..z_D, z_1^2..z_D^2`` (no cross terms)."""
    z = np.atleast_2d(z)
    return np.hstack([np.ones((z.shape[0], 1)), z, z * z])


@dataclass(frozen=True)
class RbfModel:
    """Fitted surrogate. Immutable; arrays are marked read-only."""

    centers: np.ndarray  # scaled coordinates, (n, D)
    theta: np.ndarray
    mu: np.ndarray
    shift: np.ndarray
    scale: np.ndarray
    values: np.ndarray = field(repr=False)
    tail_order: int = TAIL_ORDER

    @property
    def dimension(self) -> int:
        return self.centers.shape[1]

    @property
    def points(self) -> np.ndarray:
        """Training points in original coordinates."""
        return self.centers * self.scale + self.shift

    def to_scaled(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.shift) / self.scale

    def predict(self, x) -> np.ndarray | float:
        return predict(self, x)

    def __call__(self, x):
        return predict(self, x)


def fit(points, values, bounds=None) -> RbfModel:
    """Fit the augmented cubic RBF interpolant.

    Parameters
    ----------
    points : (n, D) array_like
    values : (n,) array_like
    bounds : (D, 2) array_like, optional
        Box used to map the inputs to ``[-1, 1]^D``. Without it the points
        are used as given.

    Raises
    ------
    RbfFitError
        Too few points, duplicates, non-finite data.
    DegenerateConfigurationError
        Singular interpolation system, or one too ill-conditioned to meet
        the interpolation conditions to ``INTERP_RTOL``.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    y = np.asarray(values, dtype=float).ravel()
    n, dim = x.shape
    if y.shape != (n,):
        raise RbfFitError(f"got {n} points but {y.size} values")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise RbfFitError("points and values must be finite")
    need = TAIL_ORDER * dim + 1
    if n < need:
        raise RbfFitError(f"need at least {need} points in dimension {dim}, got {n}")

    shift, scale = _scaling(bounds, dim)
    z = (x - shift) / scale
    dup = cdist(z, z, "chebyshev")
    np.fill_diagonal(dup, np.inf)
    if np.any(dup < DUPLICATE_TOL):
        i, j = np.argwhere(dup < DUPLICATE_TOL)[0]
        raise DuplicatePointsError(f"points {i} and {j} coincide")

    phi = cdist(z, z) ** 3
    tail = tail_matrix(z)
    theta, mu = solve_saddle(phi, tail, y)
    # a solve that passed the pivot test can still be too ill-conditioned to
    # honour the interpolation conditions in double precision
    resid = np.abs(phi @ theta + tail @ mu - y)
    ortho = np.abs(tail.T @ theta)
    if (np.any(resid > INTERP_RTOL * np.maximum(1.0, np.abs(y)))
            or np.any(ortho > ORTHO_RTOL * max(1.0, np.abs(theta).max()))):
        raise DegenerateConfigurationError(
            f"point set too ill-conditioned (interpolation residual {resid.max():.1e})"
        )
    arrays = [z, theta, mu, shift, scale, y.copy()]
    for a in arrays:
        a.setflags(write=False)
    return RbfModel(centers=z, theta=theta, mu=mu, shift=shift, scale=scale, values=arrays[-1])


def _predict_scaled(model: RbfModel, z: np.ndarray) -> np.ndarray:
    r = cdist(z, model.centers)
    return (r ** 3) @ model.theta + tail_matrix(z) @ model.mu


def predict(model: RbfModel, x):
    """Evaluate the surrogate at one point ``(D,)`` or a batch ``(m, D)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    z = np.atleast_2d(x)
    if z.shape[1] != model.dimension:
        raise ValueError(f"expected dimension {model.dimension}, got {z.shape[1]}")
    if not np.all(np.isfinite(z)):
        raise ValueError("query point must be finite")
    out = _predict_scaled(model, (z - model.shift) / model.scale)
    return float(out[0]) if single else out


def predict_with_gradient(model: RbfModel, x) -> tuple[float, np.ndarray]:
    """Value and gradient (w.r.t. original coordinates) at a single point."""
    z = (np.asarray(x, dtype=float) - model.shift) / model.scale
    diff = z - model.centers
    r = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    d = z.size
    val = (r ** 3) @ model.theta + model.mu[0] + model.mu[1:d + 1] @ z + model.mu[d + 1:] @ (z * z)
    grad_z = 3.0 * (model.theta * r) @ diff + model.mu[1:d + 1] + 2.0 * model.mu[d + 1:] * z
    return float(val), grad_z / model.scale


@dataclass(frozen=True)
class SliceTable:
    axis: int
    coordinate: np.ndarray
    true_value: np.ndarray
    model_value: np.ndarray

    def relative_error(self) -> float:
        """Max model error over the slice, relative to the true value range."""
        span = np.ptp(self.true_value)
        err = np.max(np.abs(self.model_value - self.true_value))
        return float(err / span) if span > 0 else float(err)

    def rows(self):
        return zip(self.coordinate.tolist(), self.true_value.tolist(), self.model_value.tolist())


def slice_diagnostic(
    model: RbfModel,
    f: Callable[[np.ndarray], float],
    center,
    axis: int,
    interval: tuple[float, float],
    samples: int = 101,
) -> SliceTable:
    """Compare ``f`` and ``model`` along one coordinate axis through ``center``."""
    center = np.asarray(center, dtype=float)
    if not 0 <= axis < center.size:
        raise ValueError(f"axis {axis} out of range for dimension {center.size}")
    lo, hi = interval
    if not hi > lo or samples < 1:
        raise ValueError("empty slice range")
    t = np.linspace(lo, hi, samples)
    pts = np.repeat(center[None, :], samples, axis=0)
    pts[:, axis] = t
    true = np.array([f(p) for p in pts], dtype=float)
    return SliceTable(axis=axis, coordinate=t, true_value=true, model_value=predict(model, pts))
