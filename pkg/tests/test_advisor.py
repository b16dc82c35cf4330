import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sketchlab.advisor import (PROFILES, advise, block_norms, calibrate, plan_satisfies, profile_rhs,
                               restricted_eigenvalue_inputs)
from sketchlab.errors import (BadBlockStructure, CalibrationBudgetExceeded, EpsilonOutOfRange, InvalidInput,
                              MissingInput, NoFixedPoint)

BASE = dict(n=1024, d=16, k=4, N=100, alpha=0.01, b=64, block_norm=1.0, l21_linf=0.2, d21=2.0, rank=8)


def test_frozen_subspace_plan():
    # Independent plain-loop fixed point: constants 1, mu = 1, eta = 1/m.
    plan = advise("subspace", {"n": 1024, "d": 16, "eps": 0.5})
    assert (plan.m, plan.s) == (3455, 3455)
    assert plan.flags["eta_le_1_over_m"]
    assert plan.eta == pytest.approx(1 / 3455)


@pytest.mark.parametrize("profile", sorted(PROFILES))
@pytest.mark.parametrize("eps", [0.1, 0.25, 0.5])
def test_fixed_point_idempotent_and_satisfied(profile, eps):
    plan = advise(profile, {**BASE, "eps": eps})
    assert plan.iterations <= 100
    assert 1 <= plan.s <= plan.m
    assert plan_satisfies(plan)
    again = advise(profile, {**BASE, "eps": eps})
    assert (again.m, again.s) == (plan.m, plan.s)
    m_req, s_req = profile_rhs(profile, {**BASE, "eps": eps}, plan.m)
    assert plan.m >= m_req * (1 - 1e-9)


def test_monotone_in_eps():
    a, b = advise("subspace", {"d": 16, "eps": 0.25}), advise("subspace", {"d": 16, "eps": 0.5})
    assert a.m >= b.m and a.s >= b.s


def test_subspace_linear_in_d():
    for mu in (1.0, math.sqrt(16 / 4096)):
        r = advise("subspace", {"d": 32, "eps": 0.5, "mu": mu}).m / advise("subspace", {"d": 16, "eps": 0.5, "mu": mu}).m
        assert 1.5 <= r <= 2.5, (mu, r)


def test_ksparse_linear_in_k():
    for k in (4, 8, 16):
        r = advise("ksparse_dictionary", {"n": 4096, "k": 2 * k, "eps": 0.25}).m / \
            advise("ksparse_dictionary", {"n": 4096, "k": k, "eps": 0.25}).m
        assert 1.6 <= r <= 2.6, (k, r)


def test_flat_finite_quadratic_in_alpha():
    # Pin m through a dominant m-term so that only the alpha term moves s.
    c = {"s.base": 0.0, "m": 1e6}
    inp = {"n": 1024, "N": 1000, "eps": 0.25}
    big = advise("flat_finite", {**inp, "alpha": 0.2}, c)
    small = advise("flat_finite", {**inp, "alpha": 0.1}, c)
    assert big.m == small.m
    assert abs(small.s - big.s / 4) <= 1


def test_eta_flags():
    plan = advise("subspace", {"d": 8, "eps": 0.25, "eta": 0.5})
    assert plan.flags["eta_le_1_over_m"] is False
    plan = advise("subspace", {"d": 8, "eps": 0.25, "eta": 1e-12})
    assert plan.flags["eta_le_1_over_m"] is True


def test_precondition_flags():
    plan = advise("ksparse_dictionary", {"n": 1024, "k": 4, "eps": 0.25, "max_entry": 1 / 32})
    assert plan.flags["max_entry_bound"] is True
    plan = advise("ksparse_dictionary", {"n": 1024, "k": 4, "eps": 0.25, "max_entry": 1.0})
    assert plan.flags["max_entry_bound"] is False


def test_errors():
    with pytest.raises(MissingInput):
        advise("subspace", {"eps": 0.1})
    with pytest.raises(EpsilonOutOfRange):
        advise("subspace", {"d": 4, "eps": 0.6})
    with pytest.raises(EpsilonOutOfRange):
        advise("subspace", {"d": 4, "eps": 0.0})
    with pytest.raises(NoFixedPoint):
        advise("subspace", {"d": 4, "eps": 0.1}, {"m": 1e300})
    with pytest.raises(InvalidInput):
        advise("manifold", {"n": 100, "d": 4, "alpha": 0.6, "eps": 0.1})
    with pytest.raises(InvalidInput):
        advise("nope", {})
    with pytest.raises(MissingInput):
        advise("cls_group_lasso", {"n": 100, "b": 4, "block_norm": 1, "l21_linf": 1, "eps": 0.1})


def test_group_lasso_weight_forms_agree():
    inp = {"n": 256, "b": 64, "block_norm": 2.0, "l21_linf": 0.5, "eps": 0.25}
    a = advise("cls_group_lasso", {**inp, "d21": math.sqrt(3) / 0.5})
    b = advise("cls_group_lasso", {**inp, "k": 3, "sigma_min_k": 0.5})
    assert (a.m, a.s) == (b.m, b.s)


def test_fjlt_profile_reports_dense_sparsity():
    plan = advise("fjlt_cls", {"n": 256, "b": 64, "d": 64, "block_norm": 1.0, "eps": 0.25, "d21": 2.0})
    assert plan.s == plan.m and plan_satisfies(plan)


MONO = {"eps": [0.4, 0.25, 0.1], "eta": [1e-2, 1e-4, 1e-8], "d": [4, 8, 16], "k": [2, 4, 8]}


@settings(max_examples=40, deadline=None)
@given(profile=st.sampled_from(sorted(PROFILES)), i=st.integers(0, 1), j=st.integers(0, 2))
def test_monotone_property(profile, i, j):
    inp = {**BASE, "eps": 0.25}
    for key, values in MONO.items():
        lo = advise(profile, {**inp, key: values[i]})
        hi = advise(profile, {**inp, key: values[i + 1]})
        assert hi.m >= lo.m and hi.s >= lo.s, (key, values[i], values[i + 1])


def test_block_norms_direct_oracle():
    A = np.random.default_rng(0).standard_normal((20, 12))
    bn, rn = block_norms(A, 4, 3)
    blocks = [A[:, 3 * l:3 * l + 3] for l in range(4)]
    assert bn == pytest.approx(max(np.linalg.norm(B) for B in blocks), rel=1e-14)
    assert rn == pytest.approx(max(np.linalg.norm(B[j]) for B in blocks for j in range(20)), rel=1e-14)
    with pytest.raises(BadBlockStructure):
        block_norms(A, 5, 3)


def test_restricted_eigenvalue_inputs_edges():
    Q = np.linalg.qr(np.random.default_rng(1).standard_normal((8, 8)))[0]
    out = restricted_eigenvalue_inputs(Q, 1, 8, 1)
    assert out["block_norm"] == pytest.approx(1.0, abs=1e-12)
    assert out["l21_linf"] == pytest.approx(np.abs(Q).max(), abs=1e-15)
    assert out["sigma_min_k"] == pytest.approx(1.0, abs=1e-12)
    assert out["sigma_method"] == "UpperEstimate"
    zero = restricted_eigenvalue_inputs(np.zeros((5, 4)), 1, 4, 1)
    assert zero["block_norm"] == zero["l21_linf"] == zero["sigma_min_k"] == 0.0
    with pytest.raises(BadBlockStructure):
        restricted_eigenvalue_inputs(np.zeros((5, 4)), 1, 3, 1)


def test_calibrate_self_certifying():
    gen = {"n": 512, "d": 8}
    res = calibrate("subspace", gen, 0.5, seed=0)
    assert res.quantile <= 0.5
    assert not res.at_lower_bound
    final = [h for h in res.history if h["c"] == res.constant]
    assert final and final[-1]["quantile"] <= 0.5
    # Every constant tried below the answer failed.
    assert all(h["quantile"] > 0.5 for h in res.history if h["c"] < res.constant)


def test_calibrate_trivial_and_impossible():
    res = calibrate("subspace", {"n": 256, "d": 1}, 2.0)
    assert res.at_lower_bound and res.constant == 2.0 ** -60
    with pytest.raises(CalibrationBudgetExceeded):
        calibrate("subspace", {"n": 256, "d": 8}, 1e-9)
    with pytest.raises(InvalidInput):
        calibrate("manifold", {"n": 64}, 0.5)
    with pytest.raises(InvalidInput):
        calibrate("subspace", {"n": 64, "d": 2}, 0.5, trials=10)


def test_calibrate_other_experiments():
    res = calibrate("ksparse_dictionary", {"n": 16, "k": 2}, 0.8, seed=1)
    assert res.quantile <= 0.8
    res = calibrate("cls_unconstrained", {"n": 256, "d": 4}, 0.5, seed=3)
    assert res.quantile <= 0.5


def test_steep_profiles_skip_small_plans():
    # With (log m)^6 terms the iteration from m = 16 either collapses to m = 1
    # (or stays put when F(16) rounds to exactly 16), or climbs past any small n.
    sizes = {advise("flat_finite", {"n": 128, "N": 20, "alpha": 0.3, "eps": 0.5}, {"m": c, "s": c}).m
             for c in np.geomspace(1e-12, 1e-2, 400)}
    assert not any(16 < m <= 128 for m in sizes) and max(sizes) > 128
    with pytest.raises(CalibrationBudgetExceeded):
        calibrate("flat_finite", {"n": 128, "N": 20}, 0.5, seed=2)
