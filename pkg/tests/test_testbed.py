import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from whitebox.testbed import (
    FUNCTION_IDS,
    CountingObjective,
    UnknownProblemError,
    evaluate,
    evaluate_batch,
    make_problem,
    parse_problem_id,
    problem_from_id,
    t_osz,
)


def _t_osz_scalar(x):
    # reference: scalar form of the oscillation transform
    if x == 0:
        return 0.0
    xh = math.log(abs(x))
    c1, c2 = (10.0, 7.9) if x > 0 else (5.5, 3.1)
    return math.copysign(math.exp(xh + 0.049 * (math.sin(c1 * xh) + math.sin(c2 * xh))), x)


@pytest.mark.parametrize("fid", FUNCTION_IDS)
@pytest.mark.parametrize("dim", [2, 5, 10])
def test_optimum_invariants(fid, dim):
    p = make_problem(fid, dim, seed=3)
    assert evaluate(p, p.x_opt) == pytest.approx(p.f_opt, abs=1e-9)
    assert np.all(np.abs(p.x_opt) <= 5.0)
    xs = np.random.default_rng(0).uniform(-5, 5, (200, dim))
    assert np.all(evaluate_batch(p, xs) >= p.f_opt - 1e-9)


def test_sphere_oracle(rng):
    p = make_problem("F01", 4, 2)
    x = rng.uniform(-5, 5, 4)
    assert evaluate(p, x) == pytest.approx(np.sum((x - p.x_opt) ** 2) + p.f_opt)


def test_plain_ellipsoid_oracle(rng):
    p = make_problem("F02", 3, 1, plain_quadratic=True)
    x = rng.uniform(-5, 5, 3)
    z = x - p.x_opt
    assert evaluate(p, x) == pytest.approx(z[0] ** 2 + 1e3 * z[1] ** 2 + 1e6 * z[2] ** 2 + p.f_opt)


@given(st.floats(-1e3, 1e3, allow_nan=False))
def test_t_osz_matches_scalar_reference(x):
    assert t_osz(np.array([x]))[0] == pytest.approx(_t_osz_scalar(x), rel=1e-12, abs=0)


@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=20))
def test_t_osz_monotone_sign_preserving(xs):
    x = np.sort(np.array(xs))
    y = t_osz(x)
    assert np.all(np.diff(y) >= 0)
    assert np.array_equal(np.sign(y), np.sign(x))


def test_linear_slope_optimum_on_boundary():
    p = make_problem("F05", 5, 1)
    assert np.all(np.abs(p.x_opt) == 5.0)
    # beyond the optimum the function stays flat
    assert evaluate(p, p.x_opt) == pytest.approx(p.f_opt)


def test_instances_are_reproducible():
    a, b = make_problem("F10", 6, 4), make_problem("F10", 6, 4)
    assert np.array_equal(a.x_opt, b.x_opt) and a.f_opt == b.f_opt
    assert np.array_equal(a.rotation_r, b.rotation_r)
    c = make_problem("F10", 6, 5)
    assert not np.array_equal(a.x_opt, c.x_opt)


def test_rotations_orthogonal():
    p = make_problem("F12", 7, 1)
    assert np.allclose(p.rotation_r @ p.rotation_r.T, np.eye(7))


def test_problem_ids():
    assert parse_problem_id("F02:D10:s3") == ("F02", 10, 3)
    assert problem_from_id("F2:D4:s1").tag == "F02:D4:s1"
    for bad in ("F99:D10:s1", "F03:D10:s1", "F02-D10", "F02:D1:s1", "F02:D41:s1"):
        with pytest.raises(UnknownProblemError):
            problem_from_id(bad)


def test_to_json_roundtrip():
    import json

    d = json.loads(make_problem("F14", 3, 2).to_json())
    assert d["id"] == "F14" and d["dimension"] == 3 and len(d["x_opt"]) == 3


def test_dimension_checked():
    p = make_problem("F01", 3)
    with pytest.raises(ValueError):
        evaluate(p, np.zeros(4))


def test_counting_objective():
    p = make_problem("F01", 3, 1)
    f = CountingObjective(p)
    f(np.zeros(3))
    vals = f.evaluate_batch(np.vstack([p.x_opt, np.ones(3)]))
    assert f.eval_count == 3
    assert np.array_equal(f.best_x, p.x_opt)
    assert f.best_error == pytest.approx(0.0, abs=1e-12)
    assert vals.shape == (2,)


def test_counting_objective_with_executor():
    from concurrent.futures import ThreadPoolExecutor

    p = make_problem("F02", 3, 1)
    xs = np.random.default_rng(1).uniform(-5, 5, (8, 3))
    serial = CountingObjective(p)
    with ThreadPoolExecutor(4) as ex:
        threaded = CountingObjective(p)
        v = threaded.evaluate_batch(xs, executor=ex)
    assert np.allclose(v, serial.evaluate_batch(xs))
    assert threaded.eval_count == 8 and threaded.best_f == serial.best_f


def test_counting_objective_rejects_nan():
    f = CountingObjective(lambda x: float("nan"))
    with pytest.raises(FloatingPointError):
        f(np.zeros(2))
