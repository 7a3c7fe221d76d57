import math

import numpy as np
import pytest
from scipy import stats

from fscl.core import (CompositionRule, GroupSample, ModelSpec, ParamLayout, augment,
                       composite_loglik, make_rule, remove)
from fscl.errors import InvalidArgumentError, NumericDomainError
from fscl.models import GaussianMeanModel


def test_make_rule_single_index():
    w = make_rule([0], 20)
    assert w.weights == (True,) + (False,) * 19
    assert w.size == 1


def test_make_rule_full():
    w = make_rule(range(20), 20)
    assert w == CompositionRule.full(20)
    assert w.size == 20


def test_make_rule_two_indices():
    assert make_rule([1, 4], 6).as_array().astype(int).tolist() == [0, 1, 0, 0, 1, 0]


@pytest.mark.parametrize("bad", [[5], [-1], [1, 1]])
def test_make_rule_rejects(bad):
    with pytest.raises(InvalidArgumentError):
        make_rule(bad, 5)


def test_augment_examples():
    assert augment(make_rule([0], 3), 1) == make_rule([0, 1], 3)
    assert augment(CompositionRule.empty(2), 0) == make_rule([0], 2)
    assert augment(CompositionRule.empty(5), 2).as_array().astype(int).tolist() == [0, 0, 1, 0, 0]


def test_augment_active_index_rejected():
    with pytest.raises(InvalidArgumentError):
        augment(make_rule([0], 3), 0)
    with pytest.raises(InvalidArgumentError):
        remove(make_rule([0], 3), 1)


def test_augment_then_remove_is_identity():
    w = make_rule([0, 3], 6)
    assert remove(augment(w, 2), 2) == w


def test_rule_active_strictly_increasing():
    w = make_rule([4, 1, 3], 6)
    assert w.active == (1, 3, 4)
    assert 3 in w and 2 not in w


def test_layout_dimensions():
    lay = ParamLayout.uniform(6, 2)
    assert lay.total_dim == 12
    assert lay.d_w(CompositionRule.full(6)) == 12
    w = make_rule([0, 5], 6)
    assert lay.d_w(w) == 4
    assert lay.coords(w).tolist() == [0, 1, 10, 11]
    assert lay.block_offsets(w) == (0, 2)


def test_group_sample_readonly_copy():
    a = np.zeros((3, 2))
    s = GroupSample(a, 1)
    a[0, 0] = 5.0
    assert s.data[0, 0] == 0.0
    with pytest.raises(ValueError):
        s.data[0, 0] = 1.0
    with pytest.raises(InvalidArgumentError):
        GroupSample(a, 2)


class _Fixed(ModelSpec):
    """Sub-likelihood values fixed by construction."""

    def __init__(self, values):
        self.values = list(values)
        self.layout = ParamLayout.uniform(len(self.values), 1)

    def validate(self, sample):
        pass

    def fit_sub(self, k, sample):
        return np.zeros(1)

    def loglik_sub(self, k, theta_k, sample):
        return self.values[k]

    def score_sub(self, k, theta_k, sample):
        return np.zeros((sample.n, 1))


def test_composite_loglik_is_mean_of_active():
    m = _Fixed([-3.0, -5.0])
    s = GroupSample(np.zeros((2, 1)), 0)
    assert composite_loglik(m, s, [0.0, 0.0], CompositionRule.full(2)) == -4.0
    assert composite_loglik(m, s, [0.0], make_rule([1], 2)) == -5.0


def test_composite_loglik_flags_nonfinite():
    m = _Fixed([-1.0, -math.inf])
    s = GroupSample(np.zeros((2, 1)), 0)
    with pytest.raises(NumericDomainError) as ei:
        composite_loglik(m, s, [0.0, 0.0], CompositionRule.full(2))
    assert ei.value.index == 1


def test_composite_loglik_gaussian_matches_direct_density():
    m = GaussianMeanModel(1, 9.0)
    s = GroupSample(np.array([[0.0], [2.0]]), 0)
    want = stats.norm.logpdf([0.0, 2.0], loc=1.0, scale=3.0).sum()
    assert composite_loglik(m, s, [1.0], CompositionRule.full(1)) == pytest.approx(want, rel=1e-14)


def test_composite_loglik_full_rule_is_mean_of_blocks(rng):
    m = GaussianMeanModel(4, [1.0, 2.0, 3.0, 4.0])
    s = GroupSample(rng.normal(size=(10, 4)), 0)
    theta = rng.normal(size=4)
    direct = np.mean([stats.norm.logpdf(s.data[:, j], theta[j], math.sqrt(j + 1.0)).sum() for j in range(4)])
    assert composite_loglik(m, s, theta, CompositionRule.full(4)) == pytest.approx(direct, rel=1e-13)


def test_composite_loglik_empty_rule_rejected():
    m = GaussianMeanModel(2)
    with pytest.raises(InvalidArgumentError):
        composite_loglik(m, GroupSample(np.zeros((2, 2)), 0), [], CompositionRule.empty(2))
