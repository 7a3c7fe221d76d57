"""Reference statistics and the FS-CL forward search.

All quadratic forms use ``n = n0 + n1`` and linear solves against (sub)matrices
of the covariance estimate; no matrix is ever inverted explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.linalg import cho_factor, cho_solve

from . import _kernels
from .core import CompositionRule, GroupSample, ModelSpec, ParamLayout, augment
from .errors import ConditioningError, InvalidArgumentError
from .estimation import (DEFAULT_B, CovEstimate, DeltaEstimate, bootstrap_cov, delta_mcle)

__all__ = [
    "METHODS",
    "TestResult",
    "SearchStep",
    "SearchTrajectory",
    "ScaledShiftedApprox",
    "wald_stat",
    "lssb_stat",
    "lssbw_stat",
    "uminp_stat",
    "scaled_shifted",
    "scaled_shifted_pvalue",
    "forward_search",
    "fscl_search",
    "oracle_power",
]

METHODS = ("Wald", "LSSB", "LSSBw", "UminP", "FSCL")


@dataclass(frozen=True, eq=False)
class TestResult:
    method: str
    statistic: float
    rule: CompositionRule
    d_w: int
    p_value: float | None = None
    null_source: str | None = None
    alpha: float = 0.05
    meta: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this class

    @property
    def reject(self) -> bool | None:
        return None if self.p_value is None else self.p_value <= self.alpha

    def with_pvalue(self, p: float, source: str) -> "TestResult":
        return TestResult(self.method, self.statistic, self.rule, self.d_w, float(p), source,
                          self.alpha, dict(self.meta))


def _check_pair(delta: DeltaEstimate, cov: CovEstimate):
    if cov.rule != delta.rule or cov.matrix.shape != (delta.d_w, delta.d_w):
        raise InvalidArgumentError("delta and covariance refer to different rules or dimensions")


def _quad_solve(V: np.ndarray, x: np.ndarray) -> float:
    try:
        c = cho_factor(V, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("covariance is not positive definite") from exc
    return float(x @ cho_solve(c, x))


def wald_stat(delta: DeltaEstimate, cov: CovEstimate, alpha: float = 0.05) -> TestResult:
    """``n d' V^-1 d`` with a chi-square(d_w) p-value."""
    _check_pair(delta, cov)
    t = delta.n * _quad_solve(cov.matrix, delta.values)
    return TestResult("Wald", t, delta.rule, delta.d_w, float(stats.chi2.sf(t, delta.d_w)), "chisq",
                      alpha, {"cov_condition": cov.condition})


def lssb_stat(delta: DeltaEstimate, cov: CovEstimate, alpha: float = 0.05) -> TestResult:
    """``n d'd`` referred to the scaled-shifted approximation with eigenvalues of V."""
    _check_pair(delta, cov)
    t = float(delta.n * delta.values @ delta.values)
    taus = np.linalg.eigvalsh(cov.matrix)
    return TestResult("LSSB", t, delta.rule, delta.d_w, scaled_shifted_pvalue(taus, t),
                      "scaled_shifted", alpha)


def _diag(cov: CovEstimate) -> np.ndarray:
    dg = np.diag(cov.matrix)
    if np.any(dg <= 0):
        raise InvalidArgumentError("covariance has a non-positive diagonal entry")
    return dg


def lssbw_stat(delta: DeltaEstimate, cov: CovEstimate, alpha: float = 0.05) -> TestResult:
    """``n d' diag(V)^-1 d`` referred to the scaled-shifted approximation."""
    _check_pair(delta, cov)
    dg = _diag(cov)
    t = float(delta.n * np.sum(delta.values ** 2 / dg))
    s = 1.0 / np.sqrt(dg)
    taus = np.linalg.eigvalsh(cov.matrix * s[:, None] * s[None, :])
    return TestResult("LSSBw", t, delta.rule, delta.d_w, scaled_shifted_pvalue(taus, t),
                      "scaled_shifted", alpha)


def uminp_stat(delta: DeltaEstimate, cov: CovEstimate, alpha: float = 0.05) -> TestResult:
    """Largest standardized coordinate ``sqrt(n) |d_j| / sqrt(V_jj)``; no closed-form p-value."""
    _check_pair(delta, cov)
    dg = _diag(cov)
    t = float(np.max(np.sqrt(delta.n) * np.abs(delta.values) / np.sqrt(dg)))
    return TestResult("UminP", t, delta.rule, delta.d_w, None, None, alpha)


@dataclass(frozen=True)
class ScaledShiftedApprox:
    """``a * chi2(r) + b`` matching three moments of ``sum tau_j X_j^2``."""

    a: float
    b: float
    r: float

    def sf(self, t) -> np.ndarray:
        return stats.chi2.sf((np.asarray(t, dtype=float) - self.b) / self.a, self.r)


def scaled_shifted(taus) -> ScaledShiftedApprox:
    tau = np.asarray(taus, dtype=float)
    if tau.ndim != 1 or tau.size == 0:
        raise InvalidArgumentError("need a non-empty eigenvalue vector")
    # eigenvalues of PSD matrices can come back as tiny negatives
    tau = np.where(np.abs(tau) <= 1e-12 * max(np.max(np.abs(tau)), 1e-300), 0.0, tau)
    if np.any(tau < 0):
        raise InvalidArgumentError("eigenvalues must be non-negative")
    s1, s2, s3 = tau.sum(), (tau ** 2).sum(), (tau ** 3).sum()
    if s3 <= 0:
        raise InvalidArgumentError("sum of cubed eigenvalues must be positive")
    return ScaledShiftedApprox(s3 / s2, s1 - s2 ** 2 / s3, s2 ** 3 / s3 ** 2)


def scaled_shifted_pvalue(taus, t: float) -> float:
    return float(scaled_shifted(taus).sf(t))


# --------------------------------------------------------------------------
# Forward search
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SearchStep:
    chosen: int
    lambdas: np.ndarray  # NaN for sub-likelihoods already active
    statistic: float


@dataclass(frozen=True, eq=False)
class SearchTrajectory:
    steps: tuple[SearchStep, ...]
    n_sub: int
    n_evals: int

    @property
    def chosen(self) -> tuple[int, ...]:
        return tuple(s.chosen for s in self.steps)

    @property
    def statistics(self) -> np.ndarray:
        return np.array([s.statistic for s in self.steps])

    def rule_at(self, t: int) -> CompositionRule:
        """Rule after ``t`` steps (``1 <= t <= len(steps)``)."""
        w = [False] * self.n_sub
        for h in self.chosen[:t]:
            w[h] = True
        return CompositionRule(tuple(w))

    @property
    def final_rule(self) -> CompositionRule:
        return self.rule_at(len(self.steps))


def _block_array(layout: ParamLayout) -> np.ndarray | None:
    p = layout.common_block_dim
    if p is None:
        return None
    return np.array(layout.shared_map, dtype=np.int64).reshape(layout.n_sub, p)


def _pick(lam: np.ndarray, active: np.ndarray) -> int:
    return int(_kernels._pick(lam, active))


def forward_search(delta: DeltaEstimate, cov: CovEstimate, layout: ParamLayout,
                   n_max: int) -> SearchTrajectory:
    """Shared-covariance greedy search on full-rule estimates."""
    full = CompositionRule.full(layout.n_sub)
    if delta.rule != full or cov.rule != full:
        raise InvalidArgumentError("shared-covariance search needs full-rule estimates")
    n_max = int(n_max)
    N = layout.n_sub
    if not 1 <= n_max <= N:
        raise InvalidArgumentError(f"N_cl* must lie in [1, {N}], got {n_max}")
    blocks = _block_array(layout) if layout.is_disjoint else None
    if blocks is None:
        return _search_generic(delta, cov, layout, n_max)
    chosen, lam, stat, ok = _kernels.forward_path(
        np.ascontiguousarray(delta.values),
        np.ascontiguousarray(cov.matrix),
        float(delta.n), blocks, n_max)
    if not ok:
        raise ConditioningError("Schur complement is not positive definite during the search")
    steps = tuple(SearchStep(int(chosen[t]), lam[t].copy(), float(stat[t])) for t in range(n_max))
    return SearchTrajectory(steps, N, n_max * N - n_max * (n_max - 1) // 2)


def _search_generic(delta: DeltaEstimate, cov: CovEstimate, layout: ParamLayout,
                    n_max: int) -> SearchTrajectory:
    """Candidate-by-candidate solves; works for any layout."""
    N = layout.n_sub
    rule = CompositionRule.empty(N)
    active = np.zeros(N, dtype=bool)
    steps, evals = [], 0
    for _ in range(n_max):
        lam = np.full(N, np.nan)
        for i in range(N):
            if active[i]:
                continue
            r = augment(rule, i)
            d = delta.restrict(r, layout)
            lam[i] = delta.n * _quad_solve(cov.restrict(r, layout).matrix, d.values)
            evals += 1
        h = _pick(lam, active)
        active[h] = True
        rule = augment(rule, h)
        steps.append(SearchStep(h, lam, float(lam[h])))
    return SearchTrajectory(tuple(steps), N, evals)


def _search_per_rule(model: ModelSpec, s0: GroupSample, s1: GroupSample, n_max: int, B: int,
                     seed) -> tuple[SearchTrajectory, dict]:
    N = model.n_sub
    rule = CompositionRule.empty(N)
    active = np.zeros(N, dtype=bool)
    steps, evals, covs = [], 0, {}
    for _ in range(n_max):
        lam = np.full(N, np.nan)
        for i in range(N):
            if active[i]:
                continue
            r = augment(rule, i)
            d = delta_mcle(model, s0, s1, r)
            c = bootstrap_cov(model, s0, s1, r, B, seed)
            covs[r] = c
            lam[i] = d.n * _quad_solve(c.matrix, d.values)
            evals += 1
        h = _pick(lam, active)
        active[h] = True
        rule = augment(rule, h)
        steps.append(SearchStep(h, lam, float(lam[h])))
    return SearchTrajectory(tuple(steps), N, evals), covs


def fscl_search(model: ModelSpec, s0: GroupSample, s1: GroupSample, n_max: int,
                cov_mode: str = "shared", B: int = DEFAULT_B, seed=0,
                alpha: float = 0.05) -> tuple[SearchTrajectory, TestResult]:
    """Forward step-up search for ``n_max`` steps; returns the path and the FS-CL statistic.

    ``cov_mode="shared"`` bootstraps once under the full rule and uses
    principal submatrices; ``"per-rule"`` re-bootstraps every candidate rule
    with the same seed.  The result carries no p-value; attach one from a
    permutation or order-statistic null.
    """
    if cov_mode == "shared":
        delta = delta_mcle(model, s0, s1)
        cov = bootstrap_cov(model, s0, s1, None, B, seed)
        traj = forward_search(delta, cov, model.layout, n_max)
        cond = cov.condition
    elif cov_mode == "per-rule":
        if not 1 <= int(n_max) <= model.n_sub:
            raise InvalidArgumentError(f"N_cl* must lie in [1, {model.n_sub}]")
        traj, covs = _search_per_rule(model, s0, s1, int(n_max), B, seed)
        cond = covs[traj.final_rule].condition
    else:
        raise InvalidArgumentError(f"unknown cov_mode {cov_mode!r}")
    rule = traj.final_rule
    res = TestResult("FSCL", float(traj.steps[-1].statistic), rule, model.layout.d_w(rule),
                     None, None, alpha, {"n_cl_star": int(n_max), "cov_mode": cov_mode,
                                        "cov_condition": cond})
    return traj, res


def oracle_power(delta_true, V, rule: CompositionRule, n: int, alpha: float = 0.05,
                 layout: ParamLayout | None = None) -> float:
    """Power of the Wald test restricted to ``rule`` under the true mean and covariance.

    ``delta_true`` and ``V`` are full-rule quantities; ``V`` is the covariance
    of ``sqrt(n) delta_hat``.  Without a layout, blocks are taken to be of
    equal size.
    """
    delta_true = np.asarray(delta_true, dtype=float)
    V = np.asarray(V, dtype=float)
    if layout is None:
        if delta_true.size % rule.n_sub:
            raise InvalidArgumentError("cannot infer equal block sizes")
        layout = ParamLayout.uniform(rule.n_sub, delta_true.size // rule.n_sub)
    if rule.is_empty:
        raise InvalidArgumentError("invalid degrees of freedom (empty rule)")
    c = layout.coords(rule)
    dw = c.size
    lam = n * _quad_solve(V[np.ix_(c, c)], delta_true[c])
    crit = stats.chi2.isf(alpha, dw)
    if lam == 0:
        return float(stats.chi2.sf(crit, dw))
    return float(stats.ncx2.sf(crit, dw, lam))
