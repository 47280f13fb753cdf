"""Small dense linear-algebra kernel.

SVD, the SVD-based inverse square root used for whitening, and the
saddle-point solve behind the augmented RBF fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

#: Singular values at or below this are treated as zero by :func:`inverse_sqrt`.
SINGULAR_CUTOFF = 1e-25

#: Relative pivot threshold of the rank-revealing QR in :func:`solve_saddle`.
PIVOT_RTOL = 1e-12

REFINEMENT_STEPS = 2


class LinalgError(ValueError):
    """Invalid input to a linear-algebra routine."""


class DegenerateConfigurationError(LinalgError):
    """The saddle-point system is (numerically) singular.

    Raised for point sets on which the augmented interpolant is not unique,
    e.g. coincident points or too few points to fix the polynomial tail.
    """


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.singular_values) @ self.v.T


def _as_square(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise LinalgError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise LinalgError(f"{name} has non-finite entries")
    return a


def svd(a) -> SvdResult:
    """Singular value decomposition ``a = U diag(d) V^T``.

    Singular values are returned non-negative and sorted descending.
    """
    a = _as_square(a)
    try:
        u, d, vt = np.linalg.svd(a)
    except np.linalg.LinAlgError as exc:
        raise LinalgError(f"SVD did not converge: {exc}") from exc
    return SvdResult(u=u, singular_values=d, v=vt.T)


def inverse_sqrt(h, cutoff: float = SINGULAR_CUTOFF) -> np.ndarray:
    """Inverse square root ``M = D^{-1/2} V^T`` of a symmetric matrix.

    ``h`` is symmetrized first. Singular values ``<= cutoff`` get a zero
    row in ``M`` so that null directions are collapsed rather than blown
    up. For positive-definite ``h`` the result satisfies
    ``M @ h @ M.T == I``; for positive-semidefinite ``h`` the product is
    the projector onto the row space of ``h`` expressed in the singular
    basis.
    """
    h = _as_square(h, "Hessian")
    h = 0.5 * (h + h.T)
    dec = svd(h)
    d = dec.singular_values
    e = np.zeros_like(d)
    keep = d > cutoff
    e[keep] = 1.0 / np.sqrt(d[keep])
    return e[:, None] * dec.v.T


def solve_saddle(phi, p, f) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``[[phi, p], [p.T, 0]] [theta; mu] = [f; 0]``.

    Uses column-pivoted QR; if any trailing diagonal entry of ``R`` falls
    below ``PIVOT_RTOL`` times the leading one the system is reported as
    degenerate instead of being regularized.

    Returns
    -------
    theta : (n,) ndarray
        Kernel weights.
    mu : (m,) ndarray
        Polynomial tail coefficients.
    """
    phi = np.asarray(phi, dtype=float)
    p = np.asarray(p, dtype=float)
    f = np.asarray(f, dtype=float).ravel()
    n = phi.shape[0]
    if phi.shape != (n, n):
        raise LinalgError(f"phi must be square, got {phi.shape}")
    if p.ndim != 2 or p.shape[0] != n:
        raise LinalgError(f"p must have {n} rows, got shape {p.shape}")
    if f.shape != (n,):
        raise LinalgError(f"f must have length {n}, got {f.shape}")
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(p)) and np.all(np.isfinite(f))):
        raise LinalgError("non-finite entries in saddle system")
    m = p.shape[1]
    if n < m:
        raise DegenerateConfigurationError(
            f"{n} points cannot determine {m} polynomial coefficients"
        )

    a = np.zeros((n + m, n + m))
    a[:n, :n] = phi
    a[:n, n:] = p
    a[n:, :n] = p.T
    rhs = np.concatenate([f, np.zeros(m)])

    q, r, piv = scipy.linalg.qr(a, pivoting=True)
    diag = np.abs(np.diag(r))
    if diag[0] == 0.0 or diag[-1] <= PIVOT_RTOL * diag[0]:
        raise DegenerateConfigurationError(
            f"saddle system is rank deficient (pivot ratio {diag[-1] / max(diag[0], 1e-300):.2e})"
        )
    def qr_solve(b):
        z = scipy.linalg.solve_triangular(r, q.T @ b)
        out = np.empty_like(z)
        out[piv] = z
        return out

    sol = qr_solve(rhs)
    # iterative refinement: cheap with the factorization at hand, and it
    # brings the interpolation residual down on ill-conditioned point sets
    for _ in range(REFINEMENT_STEPS):
        sol = sol + qr_solve(rhs - a @ sol)
    return sol[:n], sol[n:]
