import numpy as np
import pytest
from scipy import stats

from fscl._rng import mix
from fscl.core import CompositionRule, ParamLayout, make_rule
from fscl.errors import InvalidArgumentError
from fscl.estimation import CovEstimate, DeltaEstimate, bootstrap_cov, delta_mcle, known_cov
from fscl.models import GaussianMeanModel, LatentCategoricalModel, simulate_gaussian, simulate_latent
from fscl.testing import (fscl_search, forward_search, lssb_stat, lssbw_stat, oracle_power,
                          scaled_shifted, scaled_shifted_pvalue, uminp_stat, wald_stat)


def _est(delta, V, n):
    delta = np.asarray(delta, dtype=float)
    q = delta.size
    w = CompositionRule.full(q)
    lay = ParamLayout.uniform(q, 1)
    d = DeltaEstimate(delta, w, lay.coords(w), lay.block_offsets(w), n // 2, n - n // 2)
    return d, known_cov(np.asarray(V, dtype=float), w, lay)


def test_wald_zero():
    r = wald_stat(*_est([0.0, 0.0], np.eye(2), 4))
    assert r.statistic == 0.0 and r.p_value == 1.0 and r.null_source == "chisq"


def test_wald_hand_values():
    assert wald_stat(*_est([1.0, 0.0], np.eye(2), 4)).statistic == pytest.approx(4.0)
    V = np.array([[2.0, 1.0], [1.0, 2.0]])
    t = wald_stat(*_est([1.0, 1.0], V, 3)).statistic
    assert t == pytest.approx(2.0, rel=1e-14)
    x = np.array([1.0, 1.0])
    assert t == pytest.approx(3 * x @ np.linalg.solve(V, x), rel=1e-14)


def test_wald_dimension_mismatch():
    d, _ = _est([1.0, 0.0], np.eye(2), 4)
    _, c = _est([1.0, 0.0, 0.0], np.eye(3), 4)
    with pytest.raises(InvalidArgumentError):
        wald_stat(d, c)


def test_lssb_values():
    assert lssb_stat(*_est([0.0, 0.0], np.eye(2), 2)).statistic == 0.0
    assert lssb_stat(*_est([1.0, 2.0], np.eye(2), 1)).statistic == pytest.approx(5.0)
    r = lssbw_stat(*_est([1.0, 2.0], np.diag([1.0, 4.0]), 1))
    assert r.statistic == pytest.approx(2.0)


def test_lssbw_zero_diagonal_rejected():
    w = CompositionRule.full(2)
    lay = ParamLayout.uniform(2, 1)
    d = DeltaEstimate([1.0, 1.0], w, lay.coords(w), (0, 1), 1, 1)
    c = CovEstimate(np.diag([1.0, 0.0]), w, lay.coords(w), "known", 0, 0.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        lssbw_stat(d, c)
    with pytest.raises(InvalidArgumentError):
        uminp_stat(d, c)


def test_uminp_values():
    assert uminp_stat(*_est([0.0, 0.0], np.eye(2), 1)).statistic == 0.0
    r = uminp_stat(*_est([3.0, -4.0], np.diag([9.0, 4.0]), 1))
    assert r.statistic == pytest.approx(2.0) and r.p_value is None
    d, c = _est([0.7], [[2.5]], 10)
    assert uminp_stat(d, c).statistic ** 2 == pytest.approx(wald_stat(d, c).statistic, rel=1e-14)


def test_scaled_shifted_equal_eigenvalues():
    a = scaled_shifted(np.ones(7))
    assert (a.a, a.b, a.r) == pytest.approx((1.0, 0.0, 7.0), abs=1e-14)
    assert scaled_shifted_pvalue(np.ones(7), 9.3) == pytest.approx(stats.chi2.sf(9.3, 7), rel=1e-12)
    a = scaled_shifted([2.0, 2.0, 2.0])
    assert (a.a, a.b, a.r) == pytest.approx((2.0, 0.0, 3.0), abs=1e-14)


def test_scaled_shifted_mixture_monte_carlo():
    x = np.random.default_rng(0).standard_normal((1_000_000, 2))
    mc = np.mean(3 * x[:, 0] ** 2 + x[:, 1] ** 2 > 5)
    assert scaled_shifted_pvalue([3.0, 1.0], 5.0) == pytest.approx(mc, abs=0.01)


def test_scaled_shifted_rejects_zero():
    with pytest.raises(InvalidArgumentError):
        scaled_shifted([0.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        scaled_shifted([1.0, -1.0])


def _gauss(d=8, n=18, shift=None, seed=0):
    shift = np.zeros(d) if shift is None else np.asarray(shift, dtype=float)
    return (GaussianMeanModel(d, 9.0),
            simulate_gaussian(np.zeros(d), 9.0, n, mix(seed, 0), 0),
            simulate_gaussian(shift, 9.0, n, mix(seed, 1), 1))


def test_fscl_full_rule_equals_wald():
    m, s0, s1 = _gauss(seed=3)
    traj, res = fscl_search(m, s0, s1, m.n_sub, B=300, seed=5)
    w = wald_stat(delta_mcle(m, s0, s1), bootstrap_cov(m, s0, s1, None, 300, 5))
    assert res.statistic == pytest.approx(w.statistic, rel=1e-10)
    assert res.rule == CompositionRule.full(m.n_sub) and res.p_value is None


def test_fscl_one_step_is_uminp_squared():
    m, s0, s1 = _gauss(seed=4)
    _, res = fscl_search(m, s0, s1, 1, B=300, seed=1)
    u = uminp_stat(delta_mcle(m, s0, s1), bootstrap_cov(m, s0, s1, None, 300, 1))
    assert res.statistic == pytest.approx(u.statistic ** 2, rel=1e-10)


def test_fscl_trajectory_shape_and_evals():
    m, s0, s1 = _gauss(d=10, shift=[2.0] + [0.0] * 9, seed=2)
    traj, res = fscl_search(m, s0, s1, 4, B=200, seed=0)
    assert len(traj.steps) == 4 and res.rule.size == 4
    assert traj.n_evals == 4 * 10 - 4 * 3 // 2
    assert traj.n_evals <= 4 * (10 - 0.5 * 3)
    assert np.all(np.diff(traj.statistics) >= 0)
    for t, st in enumerate(traj.steps):
        assert np.isnan(st.lambdas[list(traj.chosen[:t])]).all()
        assert st.lambdas[st.chosen] == np.nanmax(st.lambdas)


def test_fscl_bounds_checked():
    m, s0, s1 = _gauss()
    for bad in (0, m.n_sub + 1):
        with pytest.raises(InvalidArgumentError):
            fscl_search(m, s0, s1, bad, B=50)
    with pytest.raises(InvalidArgumentError):
        fscl_search(m, s0, s1, 2, cov_mode="bogus", B=50)


def test_per_rule_mode_matches_shared_for_disjoint_blocks():
    model = LatentCategoricalModel(5, 3)
    g = np.tile([-0.3, 0.3], (5, 1))
    s0 = simulate_latent(model, g, 50, mix(2, 0), 0)
    s1 = simulate_latent(model, g + np.array([[-0.5, 0.5]] + [[0.0, 0.0]] * 4), 50, mix(2, 1), 1)
    a, ra = fscl_search(model, s0, s1, 3, "shared", B=100, seed=7)
    b, rb = fscl_search(model, s0, s1, 3, "per-rule", B=100, seed=7)
    assert a.chosen == b.chosen
    assert ra.statistic == pytest.approx(rb.statistic, rel=1e-10)


def test_tie_goes_to_smallest_index():
    w = CompositionRule.full(4)
    lay = ParamLayout.uniform(4, 1)
    d = DeltaEstimate([1.0, -1.0, 1.0, 0.5], w, lay.coords(w), lay.block_offsets(w), 5, 5)
    traj = forward_search(d, known_cov(np.eye(4), w, lay), lay, 3)
    assert traj.chosen == (0, 1, 2)


def test_generic_search_matches_kernel():
    from fscl.testing import _search_generic
    rng = np.random.default_rng(1)
    lay = ParamLayout.uniform(6, 2)
    A = rng.normal(size=(12, 12))
    V = A @ A.T + 12 * np.eye(12)
    w = CompositionRule.full(6)
    d = DeltaEstimate(rng.normal(size=12), w, lay.coords(w), lay.block_offsets(w), 20, 20)
    c = known_cov(V, w, lay)
    a = forward_search(d, c, lay, 6)
    b = _search_generic(d, c, lay, 6)
    assert a.chosen == b.chosen
    assert np.allclose(a.statistics, b.statistics, rtol=1e-10)


def test_oracle_power_central_and_noncentral():
    w = make_rule([0], 3)
    assert oracle_power(np.zeros(3), np.eye(3), w, 10) == pytest.approx(0.05, abs=1e-12)
    # lambda = n * delta^2 / V = 10
    p = oracle_power([1.0, 0.0, 0.0], np.eye(3), w, 10)
    x = np.random.default_rng(3).noncentral_chisquare(1, 10.0, 1_000_000)
    assert p == pytest.approx(np.mean(x > stats.chi2.isf(0.05, 1)), abs=0.005)
    with pytest.raises(InvalidArgumentError):
        oracle_power(np.zeros(3), np.eye(3), CompositionRule.empty(3), 10)


def test_search_prefers_informative_blocks():
    # population optimum: the one shifted coordinate
    m, s0, s1 = _gauss(d=10, n=200, shift=[3.0] + [0.0] * 9, seed=8)
    traj, _ = fscl_search(m, s0, s1, 1, B=200, seed=0)
    assert traj.chosen == (0,)
    V = m.known_cov(200, 200)
    best = max(range(10), key=lambda k: oracle_power([3.0] + [0.0] * 9, V, make_rule([k], 10), 400))
    assert best == 0
