"""CL-BIC along the forward path and the posterior over the number of steps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CompositionRule, GroupSample, ModelSpec, composite_loglik, make_rule
from .errors import ConditioningError, InvalidArgumentError
from .estimation import DEFAULT_B, InformationEstimate, estimate_information, mcle
from .testing import SearchTrajectory, fscl_search

__all__ = ["CLBicEntry", "CLBicPath", "effective_dof", "cl_bic_two_sample", "select_ncl",
           "posterior_from_bic"]


@dataclass(frozen=True)
class CLBicEntry:
    t: int
    rule: CompositionRule
    cl_bic: float
    loglik: float  # l0 + l1, normalized composite log-likelihoods
    dof: float  # p*_0 + p*_1
    posterior: float


@dataclass(frozen=True, eq=False)
class CLBicPath:
    entries: tuple[CLBicEntry, ...]
    map_choice: int  # t of the MAP entry (1-based step count)
    trajectory: SearchTrajectory | None = None

    def __post_init__(self):
        if not self.entries:
            raise InvalidArgumentError("empty CL-BIC path")

    @property
    def values(self) -> np.ndarray:
        return np.array([e.cl_bic for e in self.entries])

    @property
    def posterior(self) -> np.ndarray:
        return np.array([e.posterior for e in self.entries])

    @property
    def map_rule(self) -> CompositionRule:
        return self.entries[self.map_choice - 1].rule


def effective_dof(info: InformationEstimate) -> float:
    """``Tr(H^-1 J)``."""
    H = np.asarray(info.H_hat, dtype=float)
    J = np.asarray(info.J_hat, dtype=float)
    try:
        if not np.all(np.isfinite(H)) or np.linalg.cond(H) > 1e14:
            raise np.linalg.LinAlgError
        return float(np.trace(np.linalg.solve(H, J)))
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("Hessian estimate is singular",
                                diagnostics={"cond": float(np.linalg.cond(H))}) from exc


def _cl_bic_group(model: ModelSpec, sample: GroupSample, rule: CompositionRule) -> tuple[float, float]:
    """Normalized composite log-likelihood at the group MCLE and ``p*``."""
    theta = mcle(model, sample, rule)
    ll = composite_loglik(model, sample, theta, rule)
    dof = effective_dof(estimate_information(model, sample, theta, rule))
    return ll, dof


def cl_bic_two_sample(model: ModelSpec, s0: GroupSample, s1: GroupSample,
                      rule: CompositionRule) -> float:
    """``-2 (l0 + l1) + log(n) (p*_0 + p*_1)`` with pooled ``n``."""
    if rule.is_empty:
        raise InvalidArgumentError("CL-BIC of the empty rule is undefined")
    l0, p0 = _cl_bic_group(model, s0, rule)
    l1, p1 = _cl_bic_group(model, s1, rule)
    return -2.0 * (l0 + l1) + np.log(s0.n + s1.n) * (p0 + p1)


def posterior_from_bic(values) -> np.ndarray:
    """Posterior over path positions under a uniform prior: softmax of ``-CL-BIC``."""
    v = np.asarray(values, dtype=float)
    u = np.exp(v.min() - v)  # centring on the minimum keeps every exponent <= 0
    return u / u.sum()


def _block_terms(model: ModelSpec, sample: GroupSample, k: int) -> tuple[float, float]:
    # for disjoint blocks H is block diagonal, so Tr(H^-1 J) adds over blocks
    rule = make_rule([k], model.n_sub)
    theta = np.atleast_1d(model.fit_sub(k, sample))
    ll = float(model.loglik_sub(k, theta, sample))
    return ll, effective_dof(estimate_information(model, sample, theta, rule))


def _path_terms(model: ModelSpec, s0: GroupSample, s1: GroupSample,
                rules: list[CompositionRule]) -> tuple[np.ndarray, np.ndarray]:
    if model.layout.is_disjoint:
        order = [next(iter(set(r.active) - set(p.active))) for p, r in
                 zip([CompositionRule.empty(model.n_sub)] + rules[:-1], rules)]
        ll_sum, dof_sum, lls, dofs = 0.0, 0.0, [], []
        for t, k in enumerate(order, start=1):
            a0, b0 = _block_terms(model, s0, k)
            a1, b1 = _block_terms(model, s1, k)
            ll_sum += a0 + a1
            dof_sum += b0 + b1
            lls.append(ll_sum / t)
            dofs.append(dof_sum)
        return np.array(lls), np.array(dofs)
    lls, dofs = [], []
    for r in rules:
        l0, p0 = _cl_bic_group(model, s0, r)
        l1, p1 = _cl_bic_group(model, s1, r)
        lls.append(l0 + l1)
        dofs.append(p0 + p1)
    return np.array(lls), np.array(dofs)


def path_from_values(rules, lls, dofs, n: int, trajectory=None) -> CLBicPath:
    bic = -2.0 * np.asarray(lls) + np.log(n) * np.asarray(dofs)
    post = posterior_from_bic(bic)
    t_map = int(np.argmin(bic)) + 1  # argmin returns the first minimum
    entries = tuple(CLBicEntry(t, r, float(b), float(l), float(d), float(p))
                    for t, (r, b, l, d, p) in enumerate(zip(rules, bic, lls, dofs, post), start=1))
    return CLBicPath(entries, t_map, trajectory)


def select_ncl(model: ModelSpec, s0: GroupSample, s1: GroupSample, cov_mode: str = "shared",
               B: int = DEFAULT_B, seed=0, trajectory: SearchTrajectory | None = None) -> CLBicPath:
    """CL-BIC along the full forward path and the MAP number of steps.

    A precomputed full-length ``trajectory`` skips the search.
    """
    if trajectory is None:
        trajectory, _ = fscl_search(model, s0, s1, model.n_sub, cov_mode, B, seed)
    rules = [trajectory.rule_at(t) for t in range(1, len(trajectory.steps) + 1)]
    lls, dofs = _path_terms(model, s0, s1, rules)
    return path_from_values(rules, lls, dofs, s0.n + s1.n, trajectory)
