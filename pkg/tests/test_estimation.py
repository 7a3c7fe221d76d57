import numpy as np
import pytest

from fscl._rng import mix
from fscl.core import CompositionRule, GroupSample, make_rule
from fscl.errors import InvalidArgumentError
from fscl.estimation import (bootstrap_cov, condition_cov, delta_mcle, estimate_information,
                             jackknife_cov, known_cov, mcle)
from fscl.models import GaussianMeanModel, LatentCategoricalModel, simulate_gaussian, simulate_latent
from fscl.selection import effective_dof


def _pair(d, n, mu1=0.0, sigma2=9.0, seed=0):
    s0 = simulate_gaussian(np.zeros(d), sigma2, n, mix(seed, 0), 0)
    s1 = simulate_gaussian(np.full(d, mu1), sigma2, n, mix(seed, 1), 1)
    return s0, s1


def test_mcle_single_block():
    m = GaussianMeanModel(2)
    s = GroupSample(np.array([[1.0, 5.0], [3.0, 5.0]]), 0)
    assert mcle(m, s, make_rule([0], 2)).tolist() == [2.0]


def test_mcle_latent_full_rule_is_rowwise_fit():
    m = LatentCategoricalModel(3, 3)
    s = simulate_latent(m, [[-0.3, 0.3]] * 3, 80, seed=1)
    assert np.array_equal(mcle(m, s, CompositionRule.full(3)), m.fit_quantiles(s).ravel())


def test_mcle_empty_rule_rejected():
    m = GaussianMeanModel(2)
    with pytest.raises(InvalidArgumentError):
        mcle(m, GroupSample(np.zeros((3, 2)), 0), CompositionRule.empty(2))


def test_mcle_is_local_maximum(rng):
    from fscl.core import composite_loglik
    m = GaussianMeanModel(3, 4.0)
    s = GroupSample(rng.normal(size=(20, 3)), 0)
    w = CompositionRule.full(3)
    th = mcle(m, s, w)
    best = composite_loglik(m, s, th, w)
    for j in range(3):
        for h in (-0.05, 0.05):
            tp = th.copy()
            tp[j] += h
            assert composite_loglik(m, s, tp, w) < best


def test_delta_identical_samples():
    s = simulate_gaussian(np.zeros(4), 1.0, 10, seed=3)
    d = delta_mcle(GaussianMeanModel(4), s, GroupSample(s.data, 1))
    assert np.all(d.values == 0.0)


def test_delta_unit_shift():
    s0 = GroupSample(np.zeros((5, 3)), 0)
    s1 = GroupSample(np.ones((5, 3)), 1)
    assert delta_mcle(GaussianMeanModel(3), s0, s1).values.tolist() == [1.0, 1.0, 1.0]


def test_delta_latent_consistency():
    m = LatentCategoricalModel(2, 3)
    g0 = np.array([[-0.3, 0.3], [-0.3, 0.3]])
    g1 = g0 + np.array([[-0.4, 0.4], [0.0, 0.0]])
    s0 = simulate_latent(m, g0, 100_000, mix(8, 0), 0)
    s1 = simulate_latent(m, g1, 100_000, mix(8, 1), 1)
    d = delta_mcle(m, s0, s1, make_rule([0], 2))
    assert d.values == pytest.approx([-0.4, 0.4], abs=0.02)


def test_bootstrap_constant_data_hits_floor():
    m = GaussianMeanModel(3)
    s0 = GroupSample(np.ones((6, 3)), 0)
    s1 = GroupSample(np.ones((6, 3)), 1)
    c = bootstrap_cov(m, s0, s1, B=50, seed=1)
    assert np.all(c.raw == 0.0)
    assert c.degenerate and c.ridge == pytest.approx(1e-10)
    assert np.allclose(c.matrix, 1e-10 * np.eye(3))
    np.linalg.cholesky(c.matrix)


def test_bootstrap_diagonal_matches_analytic():
    # Var(sqrt(n0+n1) (mean1 - mean0)) = (n0+n1) * 9 * (1/n0 + 1/n1) = 36 for n0 = n1
    m = GaussianMeanModel(4, 9.0)
    s0, s1 = _pair(4, 18, seed=5)
    c = bootstrap_cov(m, s0, s1, B=10_000, seed=2)
    # the bootstrap targets the plug-in variance of the observed sample
    plug = 2 * (np.var(s0.data, axis=0) + np.var(s1.data, axis=0))
    assert np.diag(c.matrix) == pytest.approx(plug, rel=0.1)
    big0, big1 = _pair(4, 2000, seed=6)
    c2 = bootstrap_cov(m, big0, big1, B=10_000, seed=2)
    assert np.diag(c2.matrix) == pytest.approx(np.full(4, 36.0), rel=0.1)
    assert np.allclose(np.diag(m.known_cov(2000, 2000)), 36.0)


def test_bootstrap_deterministic_and_symmetric():
    m = GaussianMeanModel(5, 2.0)
    s0, s1 = _pair(5, 12, seed=9)
    a = bootstrap_cov(m, s0, s1, B=300, seed=17)
    b = bootstrap_cov(m, s0, s1, B=300, seed=17)
    assert np.array_equal(a.matrix, b.matrix)
    assert np.array_equal(a.matrix, a.matrix.T)
    assert not np.array_equal(a.matrix, bootstrap_cov(m, s0, s1, B=300, seed=18).matrix)


def test_bootstrap_subrule_is_principal_submatrix():
    m = LatentCategoricalModel(4, 3)
    s0 = simulate_latent(m, [[-0.3, 0.3]] * 4, 40, mix(1, 0), 0)
    s1 = simulate_latent(m, [[-0.3, 0.3]] * 4, 40, mix(1, 1), 1)
    full = bootstrap_cov(m, s0, s1, B=200, seed=4)
    w = make_rule([1, 3], 4)
    sub = bootstrap_cov(m, s0, s1, w, B=200, seed=4)
    c = m.layout.coords(w)
    assert np.array_equal(sub.raw, full.raw[np.ix_(c, c)])
    assert np.array_equal(full.restrict(w, m.layout).raw, sub.raw)


def test_bootstrap_needs_two_replicates():
    m = GaussianMeanModel(2)
    s0, s1 = _pair(2, 5)
    with pytest.raises(InvalidArgumentError):
        bootstrap_cov(m, s0, s1, B=1)


def test_jackknife_constant_and_small_groups():
    m = GaussianMeanModel(2)
    c = jackknife_cov(m, GroupSample(np.ones((4, 2)), 0), GroupSample(np.ones((4, 2)), 1))
    assert np.all(c.raw == 0.0)
    with pytest.raises(InvalidArgumentError):
        jackknife_cov(m, GroupSample(np.ones((1, 2)), 0), GroupSample(np.ones((4, 2)), 1))


def test_jackknife_agrees_with_bootstrap():
    m = GaussianMeanModel(3, 9.0)
    s0, s1 = _pair(3, 100, seed=12)
    jk = jackknife_cov(m, s0, s1)
    bs = bootstrap_cov(m, s0, s1, B=10_000, seed=3)
    assert np.diag(jk.matrix) == pytest.approx(np.diag(bs.matrix), rel=0.15)
    # off-diagonals are near zero for independent coordinates; compare on the diagonal scale
    scale = np.sqrt(np.outer(np.diag(bs.matrix), np.diag(bs.matrix)))
    assert np.max(np.abs(jk.matrix - bs.matrix) / scale) < 0.15


def test_known_cov_restriction():
    m = GaussianMeanModel(4, grouping="pairwise")
    V = np.arange(16.0).reshape(4, 4)
    V = V @ V.T + np.eye(4)
    c = known_cov(V, make_rule([1], 2), m.layout)
    assert np.array_equal(c.matrix, V[2:, 2:])
    with pytest.raises(InvalidArgumentError):
        known_cov(np.eye(3), make_rule([1], 2), m.layout)


def test_condition_cov_ridge():
    m, lo, ridge, raw = condition_cov(np.diag([1.0, 0.0]))
    assert lo == 0.0 and ridge == pytest.approx(1e-8 * 0.5)
    assert m[1, 1] == pytest.approx(ridge)
    m, lo, ridge, _ = condition_cov(np.array([[2.0, 1.0], [0.0, 2.0]]))
    assert ridge == 0.0 and m[0, 1] == m[1, 0] == 0.5


def test_information_gaussian_hessian():
    m = GaussianMeanModel(1, 9.0)
    s = simulate_gaussian([0.5], 9.0, 50, seed=2)
    w = CompositionRule.full(1)
    info = estimate_information(m, s, mcle(m, s, w), w)
    assert info.H_hat[0, 0] == pytest.approx(1 / 9, rel=1e-4)
    assert np.linalg.eigvalsh(info.J_hat).min() >= -1e-12


def test_information_identity_latent():
    m = LatentCategoricalModel(3, 3)
    s = simulate_latent(m, [[-0.3, 0.3], [-1.0, 0.2], [0.1, 0.8]], 100_000, seed=21)
    w = CompositionRule.full(3)
    info = estimate_information(m, s, mcle(m, s, w), w)
    assert effective_dof(info) == pytest.approx(6.0, rel=0.1)
    assert np.linalg.eigvalsh(info.J_hat).min() >= -1e-12
    G = info.godambe
    assert np.allclose(G, G.T, atol=1e-8)
