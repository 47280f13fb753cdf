import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from whitebox.linalg import (
    SINGULAR_CUTOFF,
    DegenerateConfigurationError,
    LinalgError,
    inverse_sqrt,
    solve_saddle,
    svd,
)

from conftest import random_spd


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_svd_reconstructs(dim, seed):
    a = np.random.default_rng(seed).standard_normal((dim, dim))
    dec = svd(a)
    assert np.allclose(dec.reconstruct(), a, atol=1e-12)
    assert np.all(np.diff(dec.singular_values) <= 0)
    assert np.allclose(dec.singular_values, np.linalg.svd(a, compute_uv=False))


def test_svd_rejects_bad_input():
    with pytest.raises(LinalgError):
        svd(np.ones((2, 3)))
    with pytest.raises(LinalgError):
        svd([[1.0, np.nan], [0.0, 1.0]])


@given(st.integers(1, 12), st.floats(1.0, 1e6), st.integers(0, 2**32 - 1))
def test_inverse_sqrt_whitens_spd(dim, cond, seed):
    h = random_spd(np.random.default_rng(seed), dim, cond)
    m = inverse_sqrt(h)
    assert np.allclose(m @ h @ m.T, np.eye(dim), atol=1e-8)


def test_inverse_sqrt_against_inverse(rng):
    # independent route: M^T M must equal H^{-1}
    h = random_spd(rng, 6, 1e4)
    m = inverse_sqrt(h)
    assert np.allclose(m.T @ m, np.linalg.inv(h), rtol=1e-8, atol=1e-10)


def test_inverse_sqrt_sphere():
    m = inverse_sqrt(2.0 * np.eye(3))
    assert np.allclose(np.abs(m), np.eye(3) / np.sqrt(2.0))


def test_inverse_sqrt_symmetrizes():
    h = np.array([[2.0, 1.0], [0.0, 2.0]])
    assert np.allclose(inverse_sqrt(h), inverse_sqrt(0.5 * (h + h.T)))


@pytest.mark.parametrize("spectrum", [(3.0, 2.0, 0.0), (5.0, 0.0, 0.0), (4.0, 1.0, 1e-30)])
def test_inverse_sqrt_cutoff(spectrum):
    perm = np.eye(3)[[2, 0, 1]]
    h = perm @ np.diag(spectrum) @ perm.T
    m = inverse_sqrt(h)
    rank = sum(s > SINGULAR_CUTOFF for s in spectrum)
    assert np.all(np.isfinite(m))
    assert np.count_nonzero(np.linalg.norm(m, axis=1) > 0) == rank
    proj = m @ h @ m.T
    assert np.allclose(proj, np.diag([1.0] * rank + [0.0] * (3 - rank)), atol=1e-12)


def test_inverse_sqrt_zero_matrix():
    assert np.array_equal(inverse_sqrt(np.zeros((2, 2))), np.zeros((2, 2)))


def _system(rng, n, m):
    x = rng.uniform(-1, 1, (n, 2))
    phi = np.linalg.norm(x[:, None] - x[None], axis=2) ** 3
    p = np.hstack([np.ones((n, 1)), x, x * x])[:, :m]
    return phi, p


def test_solve_saddle_matches_dense_solve(rng):
    phi, p = _system(rng, 12, 5)
    f = rng.standard_normal(12)
    theta, mu = solve_saddle(phi, p, f)
    a = np.block([[phi, p], [p.T, np.zeros((5, 5))]])
    ref = np.linalg.solve(a, np.concatenate([f, np.zeros(5)]))
    assert np.allclose(np.concatenate([theta, mu]), ref, atol=1e-9)
    assert np.allclose(p.T @ theta, 0.0, atol=1e-10)


def test_solve_saddle_degenerate(rng):
    phi, p = _system(rng, 8, 5)
    phi[1], phi[:, 1] = phi[0], phi[:, 0]
    p[1] = p[0]
    with pytest.raises(DegenerateConfigurationError):
        solve_saddle(phi, p, np.ones(8))


def test_solve_saddle_too_few_points(rng):
    phi, p = _system(rng, 3, 5)
    with pytest.raises(DegenerateConfigurationError):
        solve_saddle(phi, p, np.ones(3))


def test_solve_saddle_shape_checks():
    with pytest.raises(LinalgError):
        solve_saddle(np.eye(3), np.ones((2, 1)), np.ones(3))
    with pytest.raises(LinalgError):
        solve_saddle(np.eye(3), np.ones((3, 1)), np.ones(2))
