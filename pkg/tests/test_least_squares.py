import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import sketchlab.least_squares as ls
from oracles import lasso_active_set, project_l1_faces, project_l21_cvx
from sketchlab.errors import (BadBlockStructure, InactiveConstraint, InsufficientSamples, MissingCertificates,
                              NonConvergence, ZeroResidual)
from sketchlab.fjlt import build_fjlt
from sketchlab.least_squares import (L1Ball, L21Ball, LsProblem, SolveReport, check_lemma_bound, l21_norm,
                                     project_l1, project_l21, sample_cone_directions, sigma_min_k_estimate,
                                     solve_exact, solve_sketched, z_certificates_cone_mc,
                                     z_certificates_unconstrained)
from sketchlab.sketch_core import build_sjlt


def test_solve_exact_trivial():
    x, f = solve_exact(LsProblem(np.eye(2), [1, 2]))
    np.testing.assert_allclose(x, [1, 2])
    assert f == pytest.approx(0, abs=1e-24)
    x, f = solve_exact(LsProblem(np.ones((2, 1)), [0, 2]))
    assert x[0] == pytest.approx(1) and f == pytest.approx(2)


def test_least_norm_solution_for_rank_deficient():
    A = np.array([[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
    x, _ = solve_exact(LsProblem(A, [2, 2, 1]))
    np.testing.assert_allclose(x, [1, 1], atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_lasso_matches_active_set_oracle(seed):
    rng = np.random.default_rng(seed)
    A, b = rng.standard_normal((30, 8)), rng.standard_normal(30)
    x, f = solve_exact(LsProblem(A, b, L1Ball(1.0)))
    assert abs(f - lasso_active_set(A, b, 1.0)) <= 1e-6
    assert np.abs(x).sum() <= 1 + 1e-9


def test_group_lasso_objective_vs_cvx():
    import cvxpy as cp

    rng = np.random.default_rng(3)
    A, b = rng.standard_normal((25, 6)), rng.standard_normal(25)
    _, f = solve_exact(LsProblem(A, b, L21Ball(3, 2, 0.7)))
    x = cp.Variable(6)
    cons = [sum(cp.norm(x[2 * l:2 * l + 2]) for l in range(3)) <= 0.7]
    ref = cp.Problem(cp.Minimize(cp.sum_squares(A @ x - b)), cons).solve(solver="CLARABEL")
    assert abs(f - ref) <= 1e-6 * (1 + ref)


def test_nonconvergence(monkeypatch):
    monkeypatch.setattr(ls, "_iteration_cap", lambda d, tol: 1)
    rng = np.random.default_rng(0)
    with pytest.raises(NonConvergence):
        solve_exact(LsProblem(rng.standard_normal((20, 5)), rng.standard_normal(20), L1Ball(0.1)))


def test_problem_validation():
    with pytest.raises(ValueError):
        LsProblem(np.ones((3, 2)), np.ones(4))
    with pytest.raises(BadBlockStructure):
        LsProblem(np.ones((3, 4)), np.ones(3), L21Ball(3, 2, 1.0))
    with pytest.raises(ValueError):
        L1Ball(0.0)


def test_project_l1_examples():
    x = np.array([0.2, -0.3])
    np.testing.assert_array_equal(project_l1(x, 1), x)
    np.testing.assert_allclose(project_l1([3, 0], 1), [1, 0])
    np.testing.assert_allclose(project_l1([1, 1], 1), [0.5, 0.5])


def test_project_l21_reductions():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(7)
    np.testing.assert_allclose(project_l21(x, 7, 1, 0.8), project_l1(x, 0.8), atol=1e-15)
    np.testing.assert_allclose(project_l21(x, 1, 7, 0.8), 0.8 * x / np.linalg.norm(x), atol=1e-15)
    with pytest.raises(BadBlockStructure):
        project_l21(x, 2, 3, 1.0)


def test_projection_oracles_random():
    rng = np.random.default_rng(10)
    for _ in range(100):
        d = int(rng.integers(1, 7))
        y = 2 * rng.standard_normal(d)
        R = float(rng.uniform(0.1, 2))
        np.testing.assert_allclose(project_l1(y, R), project_l1_faces(y, R), atol=1e-9)
    for _ in range(30):
        D = int(rng.integers(1, 4))
        b = int(rng.integers(1, 7 // D + 1))
        y = 2 * rng.standard_normal(b * D)
        R = float(rng.uniform(0.1, 2))
        np.testing.assert_allclose(project_l21(y, b, D, R), project_l21_cvx(y, b, D, R), atol=1e-6)


vecs = st.lists(st.floats(-10, 10, allow_nan=False), min_size=4, max_size=4)


@settings(max_examples=100, deadline=None)
@given(x=vecs, y=vecs, R=st.floats(0.05, 5))
def test_projection_idempotent_nonexpansive(x, y, R):
    x, y = np.array(x), np.array(y)
    for proj in (lambda v: project_l1(v, R), lambda v: project_l21(v, 2, 2, R)):
        px, py = proj(x), proj(y)
        np.testing.assert_allclose(proj(px), px, atol=1e-12)
        assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-12


def test_full_fjlt_sketch_recovers_solution():
    rng = np.random.default_rng(0)
    A, b = rng.standard_normal((64, 5)), rng.standard_normal(64)
    for cons in (ls.Unconstrained(), L1Ball(0.5)):
        rep = solve_sketched(LsProblem(A, b, cons), build_fjlt(64, 64, 1))
        np.testing.assert_allclose(rep.x_hat, rep.x_star, atol=1e-8)
        assert rep.ratio == pytest.approx(1, abs=1e-9)


def test_exact_fit_ratio_convention():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((40, 3))
    rep = solve_sketched(LsProblem(A, A @ np.array([1.0, -2.0, 0.5])), build_sjlt(16, 40, 2, seed=1))
    assert rep.f_star <= 1e-12 and rep.ratio == 1.0 and rep.z1 is None
    assert check_lemma_bound(rep)
    with pytest.raises(ZeroResidual):
        z_certificates_unconstrained(LsProblem(A, A[:, 0]), build_sjlt(16, 40, 2))


def test_objective_sandwich():
    rng = np.random.default_rng(4)
    for seed in range(10):
        A, b = rng.standard_normal((80, 6)), rng.standard_normal(80)
        for cons in (ls.Unconstrained(), L1Ball(0.3), L21Ball(3, 2, 0.3)):
            rep = solve_sketched(LsProblem(A, b, cons), build_sjlt(24, 80, 3, seed=seed), tol=1e-10,
                                 certificates=False)
            assert rep.f_hat >= rep.f_star - 1e-9 * (1 + rep.f_star)


def test_certificates_isometric_sketch():
    rng = np.random.default_rng(5)
    A, b = rng.standard_normal((32, 3)), rng.standard_normal(32)
    c = z_certificates_unconstrained(LsProblem(A, b), build_fjlt(32, 32, 2))
    assert c.z1 == pytest.approx(1, abs=1e-12) and c.z2 == pytest.approx(0, abs=1e-12)
    assert c.method == "Exact"


def test_certificates_rank_one():
    rng = np.random.default_rng(6)
    a = rng.standard_normal(30)
    op = build_sjlt(10, 30, 2, seed=6)
    c = z_certificates_unconstrained(LsProblem(a[:, None], rng.standard_normal(30)), op)
    assert c.z1 == pytest.approx(np.sum(op.apply(a) ** 2) / (a @ a), rel=1e-12)


def test_z2_monte_carlo_oracle():
    rng = np.random.default_rng(7)
    A, b = rng.standard_normal((40, 2)), rng.standard_normal(40)
    p = LsProblem(A, b)
    op = build_sjlt(12, 40, 3, seed=7)
    exact = z_certificates_unconstrained(p, op)
    x_star = np.linalg.lstsq(A, b, rcond=None)[0]
    u = (A @ x_star - b) / np.linalg.norm(A @ x_star - b)
    U = np.linalg.qr(A)[0]
    C = rng.standard_normal((2, 10**5))
    V = U @ (C / np.linalg.norm(C, axis=0))
    Pu, PV = op.apply(u), op.apply_matrix(V)
    mc = np.abs(PV.T @ Pu - V.T @ u).max()
    assert 0.8 * exact.z2 <= mc <= exact.z2 * (1 + 1e-12)
    assert np.einsum("ij,ij->j", PV, PV).min() >= exact.z1 * (1 - 1e-12)


def _boundary_problem(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((20, 2))
    b = A @ np.array([2.0, 0.3]) + 0.3 * rng.standard_normal(20)
    return LsProblem(A, b, L1Ball(1.0))


def test_cone_mc_vs_mesh_oracle():
    p = _boundary_problem(0)
    x_star, _ = solve_exact(p, tol=1e-13)
    assert p.constraint.is_active(x_star)
    op = build_sjlt(8, 20, 2, seed=3)
    S = np.abs(x_star) > 0
    theta = np.linspace(0, 2 * np.pi, 10**5, endpoint=False)
    Y = np.vstack([np.cos(theta), np.sin(theta)])
    lhs = (np.sign(x_star[S])[:, None] * Y[S]).sum(axis=0) + np.abs(Y[~S]).sum(axis=0)
    Y = Y[:, lhs <= 1e-12]
    V = p.A @ Y
    V /= np.linalg.norm(V, axis=0)
    r = p.A @ x_star - p.b
    u = r / np.linalg.norm(r)
    PV = op.apply_matrix(V)
    z1_mesh = np.einsum("ij,ij->j", PV, PV).min()
    z2_mesh = np.abs(PV.T @ op.apply(u) - V.T @ u).max()
    c = z_certificates_cone_mc(p, op, x_star, 20000, seed=1)
    assert c.method == "MC"
    assert z1_mesh * (1 - 1e-6) <= c.z1 <= z1_mesh * 1.01
    assert 0.99 * z2_mesh <= c.z2 <= z2_mesh * (1 + 1e-6)


def test_cone_mc_fallback_and_errors():
    rng = np.random.default_rng(1)
    A, b = rng.standard_normal((30, 3)), rng.standard_normal(30)
    p = LsProblem(A, b, L1Ball(100.0))
    x_star, _ = solve_exact(p)
    op = build_sjlt(12, 30, 2, seed=1)
    fb = z_certificates_cone_mc(p, op, x_star, 100, seed=0)
    exact = z_certificates_unconstrained(LsProblem(A, b), op)
    assert fb.z1 == pytest.approx(exact.z1, rel=1e-9) and fb.z2 == pytest.approx(exact.z2, rel=1e-6, abs=1e-9)
    with pytest.raises(InactiveConstraint):
        z_certificates_cone_mc(p, op, x_star, 100, fallback=False)
    with pytest.raises(InsufficientSamples):
        z_certificates_cone_mc(p, op, x_star, 0)


def test_tangent_cone_inequality():
    rng = np.random.default_rng(2)
    b_blocks, D, k = 6, 2, 2
    x = np.zeros(b_blocks * D)
    x[0:2], x[6:8] = [1.0, -0.5], [0.3, 0.2]
    R = l21_norm(x, b_blocks, D)
    Y = sample_cone_directions(L21Ball(b_blocks, D, R), x, 500, rng)
    assert Y.shape[1] > 400
    for y in Y.T:
        assert l21_norm(y, b_blocks, D) <= 2 * math.sqrt(k) * np.linalg.norm(y) + 1e-9


def _report(f_star, f_hat, z1, z2, glob=True):
    return SolveReport(np.zeros(1), np.zeros(1), f_star, f_hat, f_hat / f_star, z1, z2, "Exact", glob)


def test_check_lemma_bound_cases():
    assert check_lemma_bound(_report(2.0, 2.0, 0.9, 0.0))
    assert not check_lemma_bound(_report(2.0, 2.0 + 1e-6, 0.9, 0.0))
    assert check_lemma_bound(_report(1.0, 1e6, 0.0, 0.3))
    assert check_lemma_bound(_report(1.0, 1.25, 1.0, 0.5, glob=True))
    assert not check_lemma_bound(_report(1.0, 1.3, 1.0, 0.5, glob=True))
    assert check_lemma_bound(_report(1.0, 2.25, 1.0, 0.5, glob=False))
    with pytest.raises(MissingCertificates):
        check_lemma_bound(_report(1.0, 1.0, None, None))


def test_lemma_holds_deterministically():
    for seed in range(40):
        rng = np.random.default_rng(seed)
        A, b = rng.standard_normal((128, 8)), rng.standard_normal(128)
        rep = solve_sketched(LsProblem(A, b), build_sjlt(32, 128, 4, seed=seed))
        assert rep.certificate_method == "Exact" and rep.lemma_bound_satisfied


def test_constrained_report_is_advisory():
    p = _boundary_problem(3)
    rep = solve_sketched(p, build_sjlt(10, 20, 2, seed=0), cert_samples=500)
    assert rep.certificate_method == "MC" and rep.lemma_advisory and not rep.global_minimizer


def test_sigma_edges():
    Q = np.linalg.qr(np.random.default_rng(0).standard_normal((9, 9)))[0]
    assert sigma_min_k_estimate(Q, 2, 9, 1).value == pytest.approx(1, abs=1e-12)
    A = np.random.default_rng(1).standard_normal((12, 6))
    A[:, 3] = 0
    est = sigma_min_k_estimate(A, 1, 6, 1)
    assert est.value == 0.0 and est.method == "UpperEstimate"
    with pytest.raises(BadBlockStructure):
        sigma_min_k_estimate(A, 1, 4, 2)


def test_sigma_grid_oracle():
    A = np.random.default_rng(7).standard_normal((12, 6))
    g = np.linspace(-1, 1, 16)
    tail = np.array(np.meshgrid(*([g] * 4), indexing="ij")).reshape(4, -1)
    grid = math.inf
    for a, b in itertools.product(g, repeat=2):
        Y = np.vstack([np.full(tail.shape[1], a), np.full(tail.shape[1], b), tail])
        nrm = np.linalg.norm(Y, axis=0)
        Y = Y[:, nrm > 0] / nrm[nrm > 0]
        Y = Y[:, np.abs(Y).sum(axis=0) <= 2]
        grid = min(grid, float(np.linalg.norm(A @ Y, axis=0).min()))
    est = sigma_min_k_estimate(A, 1, 6, 1, budget=64, seed=0).value
    assert 0.95 * grid <= est <= grid * (1 + 1e-9)


def test_report_json():
    rep = solve_sketched(_boundary_problem(1), build_sjlt(10, 20, 2), cert_samples=50)
    js = rep.to_json()
    assert isinstance(js["x_star"], list) and js["certificate_method"] == "MC"
