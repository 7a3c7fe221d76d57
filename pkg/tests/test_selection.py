import math

import numpy as np
import pytest

from fscl._rng import mix
from fscl.core import CompositionRule, composite_loglik, make_rule
from fscl.errors import ConditioningError, InvalidArgumentError
from fscl.estimation import InformationEstimate, estimate_information, mcle
from fscl.models import GaussianMeanModel, LatentCategoricalModel, simulate_gaussian, simulate_latent
from fscl.selection import (cl_bic_two_sample, effective_dof, path_from_values, posterior_from_bic,
                            select_ncl)


def _info(H, J):
    return InformationEstimate(np.asarray(H, float), np.asarray(J, float), CompositionRule.full(1), 10)


def test_effective_dof_hand_values():
    assert effective_dof(_info(np.eye(3), np.eye(3))) == pytest.approx(3.0)
    assert effective_dof(_info(2 * np.eye(2), np.eye(2))) == pytest.approx(1.0)
    with pytest.raises(ConditioningError):
        effective_dof(_info(np.zeros((2, 2)), np.eye(2)))


def _latent_pair(d=4, n=100, eps=0.3, seed=0):
    m = LatentCategoricalModel(d, 3)
    g0 = np.tile([-0.3, 0.3], (d, 1))
    g1 = g0.copy()
    g1[0] += [-eps, eps]
    return m, simulate_latent(m, g0, n, mix(seed, 0), 0), simulate_latent(m, g1, n, mix(seed, 1), 1)


def test_cl_bic_reproducible():
    m, s0, s1 = _latent_pair()
    w = make_rule([0, 2], 4)
    a = cl_bic_two_sample(m, s0, s1, w)
    assert math.isfinite(a) and a == cl_bic_two_sample(m, s0, s1, w)
    with pytest.raises(InvalidArgumentError):
        cl_bic_two_sample(m, s0, s1, CompositionRule.empty(4))


def test_cl_bic_termwise_gaussian():
    m = GaussianMeanModel(3, 4.0)
    s0 = simulate_gaussian(np.zeros(3), 4.0, 30, mix(1, 0), 0)
    s1 = simulate_gaussian([2.0, 0, 0], 4.0, 30, mix(1, 1), 1)
    w1, w2 = make_rule([0], 3), make_rule([0, 1], 3)

    def terms(w):
        ll = dof = 0.0
        for s in (s0, s1):
            th = mcle(m, s, w)
            ll += composite_loglik(m, s, th, w)
            # known variance: H = 1/sigma2, J = var/sigma2^2 per coordinate
            dof += sum(np.var(s.data[:, k], ddof=1) / 4.0 for k in w.active)
        return ll, dof

    (l1, p1), (l2, p2) = terms(w1), terms(w2)
    diff = cl_bic_two_sample(m, s0, s1, w2) - cl_bic_two_sample(m, s0, s1, w1)
    assert diff == pytest.approx(-2 * (l2 - l1) + math.log(60) * (p2 - p1), rel=1e-6)


def test_posterior_normalized_and_shift_invariant():
    v = np.array([431.25, 440.0, 455.5, 431.25, 1e4])
    p = posterior_from_bic(v)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(p, posterior_from_bic(v + 1024.0))  # shift exact in binary
    assert p[-1] == 0.0 and p[0] == p[3]
    assert np.allclose(posterior_from_bic(np.full(5, 400.0)), 0.2, atol=1e-15)


def test_map_ties_to_smallest_t():
    rules = [make_rule(range(t), 3) for t in (1, 2, 3)]
    path = path_from_values(rules, np.array([-10.0, -9.0, -10.0]), np.array([1.0, 3.0, 1.0]), 20)
    assert path.map_choice == 1
    assert path.values[0] == path.values[2]
    assert path.map_rule == rules[0]


def test_select_ncl_path_structure():
    m, s0, s1 = _latent_pair(d=5, eps=0.8, seed=4)
    path = select_ncl(m, s0, s1, B=200, seed=1)
    assert len(path.entries) == 5
    assert path.posterior.sum() == pytest.approx(1.0, abs=1e-12)
    assert path.map_choice == int(np.argmin(path.values)) + 1
    for a, b in zip(path.entries, path.entries[1:]):
        assert set(a.rule.active) < set(b.rule.active) and b.rule.size == a.rule.size + 1


def test_select_ncl_matches_direct_evaluation():
    m, s0, s1 = _latent_pair(d=4, eps=0.5, seed=6)
    path = select_ncl(m, s0, s1, B=100, seed=2)
    for e in path.entries:
        assert e.cl_bic == pytest.approx(cl_bic_two_sample(m, s0, s1, e.rule), rel=1e-10)


def test_select_ncl_accepts_trajectory():
    from fscl.testing import fscl_search
    m, s0, s1 = _latent_pair(d=4, seed=7)
    traj, _ = fscl_search(m, s0, s1, 4, B=100, seed=3)
    a = select_ncl(m, s0, s1, trajectory=traj)
    b = select_ncl(m, s0, s1, B=100, seed=3)
    assert np.array_equal(a.values, b.values) and a.trajectory is traj


def test_dof_near_dw_when_correctly_specified():
    m = LatentCategoricalModel(2, 3)
    s = simulate_latent(m, [[-0.3, 0.3], [-0.5, 1.0]], 100_000, seed=2)
    w = CompositionRule.full(2)
    assert effective_dof(estimate_information(m, s, mcle(m, s, w), w)) == pytest.approx(4.0, rel=0.1)
