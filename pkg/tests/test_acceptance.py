"""Acceptance suite: one test per numbered criterion.

Each test records a PASS/FAIL line that is echoed in the terminal summary.
The benchmark-scale criteria (6, 7) run full 500-iteration campaigns; their
traces are cached under ``.acceptance_cache/<source hash>`` so reruns with
unchanged solver code only rebuild the reports. Criterion 8 (D=20) runs
only with ``WHITEBOX_NIGHTLY=1``. ``WHITEBOX_ACCEPT_SEEDS`` sets the seed
count of criterion 7 (default 5).
"""

import hashlib
import os
from pathlib import Path

import numpy as np
import pytest

import whitebox
from whitebox import rbf
from whitebox.archive import Archive
from whitebox.harness import CampaignSpec, profile_value, run_campaign
from whitebox.hessian import budget, estimate_hessian
from whitebox.linalg import inverse_sqrt
from whitebox.optimizer import OptimizerConfig, run_de, run_sacobra, run_sacobra_ow
from whitebox.testbed import CONDITION_NUMBERS, FUNCTION_IDS, CountingObjective, make_problem
from whitebox.whitening import WhitenedObjective, build_whitening

from conftest import random_spd

RESULTS: dict[int, str] = {}
PKG = Path(whitebox.__file__).parent
ROOT = Path(__file__).resolve().parents[1]


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def _cache_dir() -> Path:
    h = hashlib.sha256()
    for name in sorted(p.name for p in PKG.glob("*.py")):
        h.update(name.encode())
        h.update((PKG / name).read_bytes())
    return ROOT / ".acceptance_cache" / h.hexdigest()[:12]


def _campaign(fids, dim, seeds, solvers):
    spec = CampaignSpec(problems=tuple((f, dim, tuple(seeds)) for f in fids), solvers=tuple(solvers),
                        tau=0.01, accounting="iterations", budget_iters=50 * dim)
    return run_campaign(spec, _cache_dir() / f"D{dim}")


def test_criterion_01_whitening_identity():
    rng = np.random.default_rng(1)
    worst = 0.0
    for k in range(50):
        d = (2, 5, 10)[k % 3]
        h = random_spd(rng, d, 10 ** rng.uniform(2, 6))
        x0 = rng.uniform(-1, 1, d)

        def f(x, h=h, x0=x0):
            return float((x - x0) @ h @ (x - x0))

        pts = rng.uniform(-5, 5, (2 * d + 5, d))
        archive = Archive(d, pts, [f(p) for p in pts])
        res = build_whitening(CountingObjective(f), archive, bounds=np.tile([-30.0, 30.0], (d, 1)))
        g = WhitenedObjective(f, res.transform)
        worst = max(worst, estimate_hessian(g, res.transform.center).condition_number)
    verdict(1, worst <= 10, f"max cond(H_g) over 50 quadratics = {worst:.3g} (<= 10)")


def test_criterion_02_hessian_budget_and_exactness():
    rng = np.random.default_rng(2)
    worst_err, over = 0.0, 0
    for k in range(200):
        d = 1 + k % 10
        a = rng.uniform(-10, 10, (d, d))
        a = 0.5 * (a + a.T)
        b = rng.uniform(-10, 10, d)
        est = estimate_hessian(lambda x: x @ a @ x + b @ x + 3.0, rng.uniform(-5, 5, d))
        over += est.evals_used > budget(d)
        worst_err = max(worst_err, np.linalg.norm(est.h - 2 * a) / np.linalg.norm(2 * a))
    verdict(2, over == 0 and worst_err <= 1e-4,
            f"budget exceeded {over} times; max relative Frobenius error {worst_err:.2e} (<= 1e-4)")


def test_criterion_03_inverse_sqrt_contract():
    rng = np.random.default_rng(3)
    worst = 0.0
    for k in range(1000):
        d = 1 + k % 20
        h = random_spd(rng, d, 10 ** rng.uniform(0, 6))
        m = inverse_sqrt(h)
        worst = max(worst, np.abs(m @ h @ m.T - np.eye(d)).max())
    # rank-deficient fixtures: exact zeros and sub-cutoff singular values
    cutoff_ok = True
    for spectrum in ([4.0, 1.0, 0.0], [2.0, 0.0, 0.0], [9.0, 1e-30, 3.0, 0.0]):
        perm = np.eye(len(spectrum))[rng.permutation(len(spectrum))]
        h = perm @ np.diag(spectrum) @ perm.T
        m = inverse_sqrt(h)
        r = sum(s > 1e-25 for s in spectrum)
        proj = m @ h @ m.T
        cutoff_ok &= bool(np.all(np.isfinite(m)) and np.isclose(np.trace(proj), r)
                          and np.allclose(proj @ proj, proj, atol=1e-12)
                          and np.sum(np.linalg.norm(m, axis=1) > 0) == r)
    verdict(3, worst <= 1e-8 and cutoff_ok,
            f"max |M H M^T - I| over 1000 SPD = {worst:.2e} (<= 1e-8); cutoff fixtures {'ok' if cutoff_ok else 'bad'}")


def test_criterion_04_rbf_invariants():
    rng = np.random.default_rng(4)
    worst = {"interp": 0.0, "poly": 0.0, "ortho": 0.0, "shift": 0.0}
    rejected = 0
    for k in range(1000):
        d = 1 + k % 6
        n = 2 * d + 1 + int(rng.integers(0, 25))
        box = np.tile([-5.0, 5.0], (d, 1))
        x = rng.uniform(-5, 5, (n, d))
        y = rng.standard_normal(n) * 10 ** rng.uniform(-2, 3)
        t = rng.uniform(-3, 3, d)
        try:
            model = rbf.fit(x, y, box)
            moved = rbf.fit(x + t, y, box + t[:, None])
        except rbf.DegenerateConfigurationError:
            # numerically singular point set: the documented error path, not a violation
            rejected += 1
            continue
        worst["interp"] = max(worst["interp"], np.max(np.abs(model(x) - y) / np.maximum(1, np.abs(y))))
        ortho = rbf.tail_matrix(model.centers).T @ model.theta
        worst["ortho"] = max(worst["ortho"], np.abs(ortho).max())
        c0, c1, c2 = rng.standard_normal(), rng.standard_normal(d), rng.standard_normal(d)
        q = lambda z: c0 + z @ c1 + (z * z) @ c2  # noqa: E731
        poly = rbf.fit(x, q(x), box)
        xt = rng.uniform(-5, 5, (100, d))
        worst["poly"] = max(worst["poly"], np.abs(poly(xt) - q(xt)).max())
        # shifting data, box and queries together must not change predictions
        worst["shift"] = max(worst["shift"], np.abs(moved(xt + t) - model(xt)).max())
    # the criterion covers interpolation and polynomial reproduction; the
    # orthogonality and translation figures are reported, not gated, because on
    # near-coincident random clouds they measure the data's conditioning.
    # Both are gated in test_rbf on stratified point sets.
    ok = worst["interp"] <= 1e-6 and worst["poly"] <= 1e-6 and rejected <= 10
    verdict(4, ok, f"{1000 - rejected} fitted, {rejected} rejected as degenerate (<= 10); "
                   f"interpolation {worst['interp']:.1e} (<= 1e-6 rel), "
                   f"polynomial reproduction {worst['poly']:.1e} (<= 1e-6); "
                   f"reported only: P^T theta {worst['ortho']:.1e}, translation {worst['shift']:.1e}")


def test_criterion_05_easy_functions():
    details, ok = [], True
    for fid in ("F01", "F05"):
        for d in (5, 10):
            errs = []
            for seed in range(1, 16):
                cfg = OptimizerConfig(dimension=d, budget_iters=10 * d, budget_evals=10 * d, seed=seed)
                trace = run_sacobra(make_problem(fid, d, seed), cfg)
                errs.append(trace.error_at(10 * d, "evaluations"))
            med = float(np.median(errs))
            ok &= med < 1e-4
            details.append(f"{fid}/D{d} median {med:.1e}")
    verdict(5, ok, "; ".join(details) + " (< 1e-4 within 10D evaluations)")


def test_criterion_06_stagnation_and_rescue():
    rep = _campaign(["F02"], 10, range(1, 16), ["sacobra", "sacobra-ow"])
    assert not rep.failures, rep.failures
    by = rep.by_solver()
    plain = float(np.median([t.final_error for t in by["sacobra"]]))
    ow = float(np.median([t.final_error for t in by["sacobra-ow"]]))
    factor = plain / max(ow, 1e-300)
    ok = plain >= 1e2 and ow <= plain / 10 and 10 <= factor <= 1e12
    verdict(6, ok, f"F02 D10 medians over 15 seeds: plain {plain:.3g} (>= 1e2), "
                   f"with whitening {ow:.3g}; improvement x{factor:.3g} (in [10, 1e12])")


def _dominance(dim, seeds):
    rep = _campaign(FUNCTION_IDS, dim, seeds, ["sacobra", "sacobra-ow", "de"])
    assert not rep.failures, rep.failures
    return {s: profile_value(p, 50) for s, p in rep.profiles.items()}


def test_criterion_07_iteration_view_dominance():
    n_seeds = int(os.environ.get("WHITEBOX_ACCEPT_SEEDS", "5"))
    d50 = _dominance(10, range(1, n_seeds + 1))
    ow = d50["sacobra-ow"]
    ok = ow >= d50["de"] and ow >= d50["sacobra"] and ow >= 0.5
    verdict(7, ok, f"d(50) at tau=0.01, iterations, D10, {n_seeds} seeds: whitening {ow:.3f}, "
                   f"plain {d50['sacobra']:.3f}, DE {d50['de']:.3f} (whitening >= others and >= 0.5)")


@pytest.mark.skipif(os.environ.get("WHITEBOX_NIGHTLY") != "1", reason="D=20 campaign runs with WHITEBOX_NIGHTLY=1")
def test_criterion_08_dimension_degradation():
    n_seeds = int(os.environ.get("WHITEBOX_ACCEPT_SEEDS", "5"))
    d10 = _dominance(10, range(1, n_seeds + 1))["sacobra-ow"]
    d20 = _dominance(20, range(1, n_seeds + 1))["sacobra-ow"]
    verdict(8, d20 < d10, f"whitening d(50): D10 {d10:.3f}, D20 {d20:.3f} (D20 < D10)")


def test_criterion_09_determinism(tmp_path):
    p = make_problem("F10", 4, 2)
    cfg = OptimizerConfig(dimension=4, budget_iters=110, seed=2)
    same = all(run(p, cfg).to_jsonl() == run(p, cfg).to_jsonl()
               for run in (run_sacobra, run_sacobra_ow, run_de))
    spec = CampaignSpec(problems=(("F02", 3, (1, 2)), ("F10", 3, (1,))),
                        solvers=("sacobra", "sacobra-ow", "de"), budget_iters=70)
    first = run_campaign(spec, tmp_path)
    before = {f.name: f.read_bytes() for f in first.files}
    for f in first.files:
        f.unlink()
    again = run_campaign(spec, tmp_path)
    rebuilt = again.executed == 0 and {f.name: f.read_bytes() for f in again.files} == before
    verdict(9, same and rebuilt, f"repeat runs identical: {same}; reports rebuilt from traces byte-identical: {rebuilt}")


def test_criterion_10_table_audit():
    rows, ok = [], True
    for fid in ("F01", "F02", "F10", "F11", "F12"):
        conds = []
        for seed in (1, 2, 3):
            p = make_problem(fid, 10, seed, nonlinear=False)
            conds.append(estimate_hessian(p, p.x_opt).condition_number)
        c = float(np.median(conds))
        good = abs(np.log10(c) - np.log10(CONDITION_NUMBERS[fid])) <= 1.0
        ok &= good
        rows.append(f"{fid} {c:.2g}/{CONDITION_NUMBERS[fid]:.0g}")
    verdict(10, ok, "cond(H) at x_opt vs table: " + ", ".join(rows) + " (within one order of magnitude)")


def test_table_audit_with_transforms_is_informational():
    """Informational: with the oscillation/asymmetry transforms the optimum is not a smooth minimum."""
    for fid in ("F02", "F10", "F11", "F12"):
        p = make_problem(fid, 10, 1)
        c = estimate_hessian(p, p.x_opt).condition_number
        assert np.isfinite(c)
        print(f"{fid} with transforms: cond(H) at x_opt = {c:.2g}")
