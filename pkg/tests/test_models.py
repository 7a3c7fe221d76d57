import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import ndtr, ndtri

from fscl._rng import mix
from fscl.core import CompositionRule, GroupSample, make_rule
from fscl.errors import InvalidArgumentError
from fscl.estimation import mcle
from fscl.models import (EPS_SEP, GaussianMeanModel, LatentCategoricalModel, QuantileParams,
                         cell_prob, gaussian_fit_sub, latent_fit_quantiles, latent_loglik_sub,
                         simulate_gaussian, simulate_latent)


def _labels(counts, d=1):
    col = np.repeat(np.arange(1, len(counts) + 1), counts)
    return GroupSample(np.tile(col[:, None], (1, d)).astype(np.int8), 0)


# Gaussian means

def test_fit_sub_small_columns():
    s = GroupSample(np.array([[1.0, 0.0], [3.0, 0.0]]), 0)
    assert gaussian_fit_sub(0, s)[0] == 2.0
    assert gaussian_fit_sub(1, s)[0] == 0.0


def test_fit_sub_matches_direct_sum():
    s = simulate_gaussian([0.5], 9.0, 18, seed=7)
    col = s.data[:, 0].tolist()
    assert gaussian_fit_sub(0, s)[0] == pytest.approx(math.fsum(col) / 18, rel=1e-14)


def test_fit_sub_empty_rejected():
    with pytest.raises(InvalidArgumentError):
        gaussian_fit_sub(0, GroupSample(np.zeros((0, 1)), 0))


def test_gaussian_invariants():
    with pytest.raises(InvalidArgumentError):
        GaussianMeanModel(3, [1.0, 0.0, 1.0])
    with pytest.raises(InvalidArgumentError):
        GaussianMeanModel(3, grouping="pairwise")
    m = GaussianMeanModel(4, grouping="pairwise")
    assert m.n_sub == 2 and m.layout.total_dim == 4


def test_gaussian_mcle_subvector_of_full(rng):
    m = GaussianMeanModel(6, 2.0)
    s = GroupSample(rng.normal(size=(15, 6)), 0)
    full = mcle(m, s, CompositionRule.full(6))
    w = make_rule([1, 4, 5], 6)
    assert np.array_equal(mcle(m, s, w), full[[1, 4, 5]])


def test_known_cov_equal_split():
    m = GaussianMeanModel(2, 9.0)
    assert np.allclose(np.diag(m.known_cov(18, 18)), 36.0)


# cell probabilities

def test_cell_prob_middle_interval():
    assert cell_prob([-0.3, 0.3], 2) == pytest.approx(ndtr(0.3) - ndtr(-0.3), abs=1e-15)
    assert cell_prob([-0.3, 0.3], 2) == pytest.approx(0.2358, abs=1e-4)


def test_cell_prob_binary_symmetry():
    assert cell_prob([0.0], 1) == 0.5


def test_cell_prob_sums_to_one():
    g = [-1.2, -0.1, 0.4, 2.0]
    assert sum(cell_prob(g, k) for k in range(1, 6)) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("g,k", [([0.3, -0.3], 1), ([0.0, 0.0], 1), ([0.0], 3), ([0.0], 0)])
def test_cell_prob_rejects(g, k):
    with pytest.raises(InvalidArgumentError):
        cell_prob(g, k)


# threshold fits

def test_fit_quantiles_tie_repair():
    q = latent_fit_quantiles(_labels([50, 0, 50]), 3)
    assert q.gamma[0].tolist() == pytest.approx([-EPS_SEP / 2, EPS_SEP / 2], abs=1e-18)
    assert q.repaired[0] and not q.clamped[0]


def test_fit_quantiles_quartiles():
    q = latent_fit_quantiles(_labels([25, 50, 25]), 3)
    assert q.gamma[0] == pytest.approx([ndtri(0.25), ndtri(0.75)], abs=1e-14)
    assert q.gamma[0] == pytest.approx([-0.6745, 0.6745], abs=1e-4)


def test_fit_quantiles_single_label_clamped():
    q = latent_fit_quantiles(_labels([0, 10, 0]), 3)
    assert q.clamped[0]
    assert np.all(np.isfinite(q.gamma)) and q.gamma[0, 0] < q.gamma[0, 1]
    assert q.gamma[0, 0] == pytest.approx(ndtri(0.05), abs=1e-6)


def test_fit_quantiles_consistency():
    model = LatentCategoricalModel(2, 3)
    truth = np.array([[-0.3, 0.3], [-1.0, 0.5]])
    s = simulate_latent(model, truth, 100_000, seed=3)
    assert np.max(np.abs(latent_fit_quantiles(s, 3).gamma - truth)) < 0.02


def test_quantile_params_invariants():
    with pytest.raises(InvalidArgumentError):
        QuantileParams([[0.3, 0.3]])
    with pytest.raises(InvalidArgumentError):
        QuantileParams([[-np.inf, 0.3]])


# one-wise log-likelihood

def test_loglik_single_observation():
    assert latent_loglik_sub(0, [0.0, 1.0], _labels([1, 0, 0]), 3) == pytest.approx(math.log(0.5))


def test_loglik_empty_rejected():
    with pytest.raises(InvalidArgumentError):
        latent_loglik_sub(0, [0.0, 1.0], GroupSample(np.zeros((0, 1), dtype=np.int8), 0), 3)


def test_loglik_matches_multinomial():
    counts = [30, 40, 30]
    p = [ndtr(-0.3), ndtr(0.3) - ndtr(-0.3), 1 - ndtr(0.3)]
    want = sum(c * math.log(pk) for c, pk in zip(counts, p))
    assert latent_loglik_sub(0, [-0.3, 0.3], _labels(counts), 3) == pytest.approx(want, rel=1e-13)
    # multinomial pmf minus its combinatorial constant
    const = stats.multinomial.logpmf(counts, 100, p) - want
    assert const == pytest.approx(math.lgamma(101) - sum(math.lgamma(c + 1) for c in counts))


def test_loglik_maximized_at_fit():
    s = simulate_latent(LatentCategoricalModel(1, 4), [[-0.8, 0.1, 0.9]], 500, seed=11)
    g = latent_fit_quantiles(s, 4).gamma[0]
    best = latent_loglik_sub(0, g, s, 4)
    for j in range(3):
        for h in (-0.1, 0.1):
            gp = g.copy()
            gp[j] += h
            if np.all(np.diff(gp) > 0):
                assert latent_loglik_sub(0, gp, s, 4) <= best


def test_score_is_zero_at_fit():
    model = LatentCategoricalModel(2, 3)
    s = simulate_latent(model, [[-0.3, 0.3]] * 2, 400, seed=2)
    th = model.fit_sub(1, s)
    assert np.abs(model.score_sub(1, th, s).mean(axis=0)).max() < 1e-10


# simulation

def test_simulate_extreme_thresholds():
    s = simulate_latent(LatentCategoricalModel(3, 3), [[-1e10, 1e10]] * 3, 50, seed=1)
    assert np.all(s.data == 2)


def test_simulate_frequencies_match_cells():
    g = [-0.3, 0.3]
    s = simulate_latent(LatentCategoricalModel(1, 3), [g], 100_000, seed=mix(5, 1))
    freq = np.bincount(s.data[:, 0], minlength=4)[1:] / s.n
    assert freq == pytest.approx([cell_prob(g, k) for k in (1, 2, 3)], abs=0.01)


def test_simulate_deterministic():
    m = LatentCategoricalModel(4, 3)
    a = simulate_latent(m, [[-0.3, 0.3]] * 4, 30, seed=99)
    b = simulate_latent(m, [[-0.3, 0.3]] * 4, 30, seed=99)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, simulate_latent(m, [[-0.3, 0.3]] * 4, 30, seed=100).data)


def test_simulate_correlated_margins():
    S = np.array([[1.0, 0.6], [0.6, 1.0]])
    m = LatentCategoricalModel(2, 2, S)
    s = simulate_latent(m, [[0.0], [0.0]], 50_000, seed=4)
    agree = np.mean(s.data[:, 0] == s.data[:, 1])
    assert agree == pytest.approx(0.5 + math.asin(0.6) / math.pi, abs=0.01)


def test_latent_model_rejects_bad_sigma():
    with pytest.raises(InvalidArgumentError):
        LatentCategoricalModel(2, 3, [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(InvalidArgumentError):
        LatentCategoricalModel(2, 1)
