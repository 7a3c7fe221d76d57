"""Group-wise MCLEs, resampling covariance estimates and information matrices.

Covariances estimate ``Var(sqrt(n) * delta_hat)`` with the pooled size
``n = n0 + n1``.  Bootstrap resampling indices depend only on the seed and
the group sizes, never on the rule, so the covariance under any rule is the
principal submatrix of the full-rule covariance drawn with the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._rng import generator
from .core import CompositionRule, GroupSample, ModelSpec
from .errors import ConditioningError, InvalidArgumentError, NumericDomainError

__all__ = [
    "DEFAULT_B",
    "RIDGE_REL",
    "RIDGE_FLOOR",
    "DeltaEstimate",
    "CovEstimate",
    "InformationEstimate",
    "mcle",
    "delta_mcle",
    "condition_cov",
    "bootstrap_cov",
    "bootstrap_replicates",
    "jackknife_cov",
    "known_cov",
    "estimate_information",
]

DEFAULT_B = 1000
RIDGE_REL = 1e-8
RIDGE_FLOOR = 1e-10


def _positions(coords: np.ndarray, sub: np.ndarray) -> np.ndarray:
    pos = {int(c): i for i, c in enumerate(coords)}
    try:
        return np.array([pos[int(c)] for c in sub], dtype=np.intp)
    except KeyError as exc:
        raise InvalidArgumentError("sub-rule is not contained in the estimate's rule") from exc


@dataclass(frozen=True, eq=False)
class DeltaEstimate:
    """Stacked ``theta1_hat(w) - theta0_hat(w)`` over the active blocks."""

    values: np.ndarray
    rule: CompositionRule
    coords: np.ndarray
    block_offsets: tuple[int, ...]
    n0: int
    n1: int

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != (len(self.coords),):
            raise InvalidArgumentError("delta length does not match the rule's dimension")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        c = np.array(self.coords, dtype=np.intp, copy=True)
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def n(self) -> int:
        return self.n0 + self.n1

    @property
    def d_w(self) -> int:
        return self.values.size

    def restrict(self, rule: CompositionRule, layout) -> "DeltaEstimate":
        sub = layout.coords(rule)
        return DeltaEstimate(self.values[_positions(self.coords, sub)], rule, sub,
                             layout.block_offsets(rule), self.n0, self.n1)


@dataclass(frozen=True, eq=False)
class CovEstimate:
    """Conditioned estimate of ``Var(sqrt(n) * delta_hat(w))``.

    ``raw`` is the symmetrized matrix before the ridge; ``ridge`` the amount
    added to the diagonal (0 when none was needed).
    """

    matrix: np.ndarray
    rule: CompositionRule
    coords: np.ndarray
    source: str
    B_used: int
    min_eig: float
    ridge: float
    raw: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        for name in ("matrix", "raw", "coords"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.array(v, copy=True)
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def d_w(self) -> int:
        return self.matrix.shape[0]

    @property
    def degenerate(self) -> bool:
        return self.ridge > 0

    @property
    def condition(self) -> dict:
        return {"min_eig": self.min_eig, "ridge": self.ridge, "degenerate": self.degenerate}

    def restrict(self, rule: CompositionRule, layout) -> "CovEstimate":
        """Principal submatrix for a sub-rule (shared-covariance mode)."""
        sub = layout.coords(rule)
        pos = _positions(self.coords, sub)
        m = self.matrix[np.ix_(pos, pos)]
        raw = None if self.raw is None else self.raw[np.ix_(pos, pos)]
        return CovEstimate(m, rule, sub, self.source, self.B_used,
                           float(np.linalg.eigvalsh(m)[0]) if m.size else 0.0, self.ridge, raw)


def mcle(model: ModelSpec, sample: GroupSample, rule: CompositionRule) -> np.ndarray:
    """MCLE of theta(w): stacked per-block fits of the active sub-likelihoods."""
    if rule.is_empty:
        raise InvalidArgumentError("MCLE of the empty rule is undefined")
    model.layout._check(rule)
    model.validate(sample)
    return np.concatenate([np.atleast_1d(model.fit_sub(k, sample)) for k in rule.active])


def delta_mcle(model: ModelSpec, s0: GroupSample, s1: GroupSample,
               rule: CompositionRule | None = None) -> DeltaEstimate:
    rule = CompositionRule.full(model.n_sub) if rule is None else rule
    if rule.is_empty:
        raise InvalidArgumentError("empty rule")
    lay = model.layout
    if rule.size == rule.n_sub:
        vals = model.fit_all(s1) - model.fit_all(s0)
    else:
        vals = mcle(model, s1, rule) - mcle(model, s0, rule)
    return DeltaEstimate(vals, rule, lay.coords(rule), lay.block_offsets(rule), s0.n, s1.n)


def condition_cov(V: np.ndarray) -> tuple[np.ndarray, float, float, np.ndarray]:
    """Symmetrize and ridge ``V``; returns ``(matrix, min_eig, ridge, raw)``."""
    raw = 0.5 * (V + V.T)
    d = raw.shape[0]
    ev = np.linalg.eigvalsh(raw)
    lo, hi = float(ev[0]), float(ev[-1])
    ridge = 0.0
    if not np.all(np.isfinite(ev)):
        raise NumericDomainError("covariance estimate is not finite")
    if hi <= 0 or lo <= RIDGE_REL * hi:
        ridge = max(RIDGE_REL * float(np.trace(raw)) / d, RIDGE_FLOOR)
        if lo + ridge <= 0:
            # strongly indefinite input: lift the spectrum above the floor
            ridge = -lo + max(RIDGE_REL * max(hi, 0.0), RIDGE_FLOOR)
    m = raw + ridge * np.eye(d) if ridge else raw.copy()
    return m, lo, ridge, raw


def _resample_rows(rng: np.random.Generator, n: int, B: int) -> np.ndarray:
    return rng.integers(0, n, size=(B, n), dtype=np.int64)


def bootstrap_replicates(model: ModelSpec, s0: GroupSample, s1: GroupSample, B: int,
                         seed) -> np.ndarray:
    """Full-rule replicates ``delta*_b``, shape ``(B, q)``."""
    model.validate(s0)
    model.validate(s1)
    rng = generator(seed)
    r0 = _resample_rows(rng, s0.n, B)
    r1 = _resample_rows(rng, s1.n, B)
    return model.fit_resampled(s1, r1) - model.fit_resampled(s0, r0)


def _cov_from_replicates(reps: np.ndarray, n: int) -> np.ndarray:
    c = reps - reps.mean(axis=0)
    return n * (c.T @ c) / (reps.shape[0] - 1)


def bootstrap_cov(model: ModelSpec, s0: GroupSample, s1: GroupSample,
                  rule: CompositionRule | None = None, B: int = DEFAULT_B, seed=0) -> CovEstimate:
    """Within-group nonparametric bootstrap estimate of Var(sqrt(n) delta_hat(w))."""
    B = int(B)
    if B < 2:
        raise InvalidArgumentError("bootstrap needs B >= 2")
    rule = CompositionRule.full(model.n_sub) if rule is None else rule
    if rule.is_empty:
        raise InvalidArgumentError("empty rule")
    coords = model.layout.coords(rule)
    reps = bootstrap_replicates(model, s0, s1, B, seed)[:, coords]
    m, lo, ridge, raw = condition_cov(_cov_from_replicates(reps, s0.n + s1.n))
    return CovEstimate(m, rule, coords, "bootstrap", B, lo, ridge, raw)


def jackknife_cov(model: ModelSpec, s0: GroupSample, s1: GroupSample,
                  rule: CompositionRule | None = None) -> CovEstimate:
    """Delete-one jackknife within each group."""
    if s0.n < 2 or s1.n < 2:
        raise InvalidArgumentError("jackknife needs at least 2 observations per group")
    rule = CompositionRule.full(model.n_sub) if rule is None else rule
    coords = model.layout.coords(rule)
    V = np.zeros((coords.size, coords.size))
    for s in (s0, s1):
        model.validate(s)
        idx = np.arange(s.n)
        rows = np.stack([np.delete(idx, i) for i in range(s.n)])
        fits = model.fit_resampled(s, rows)[:, coords]
        c = fits - fits.mean(axis=0)
        V += (s.n - 1) / s.n * (c.T @ c)
    m, lo, ridge, raw = condition_cov((s0.n + s1.n) * V)
    return CovEstimate(m, rule, coords, "jackknife", s0.n + s1.n, lo, ridge, raw)


def known_cov(V: np.ndarray, rule: CompositionRule, layout) -> CovEstimate:
    """Wrap a known covariance of sqrt(n) delta_hat under the full rule, restricted to ``rule``."""
    V = np.asarray(V, dtype=float)
    full = CompositionRule.full(layout.n_sub)
    q = layout.total_dim
    if V.shape != (q, q):
        raise InvalidArgumentError(f"known covariance must be {q} x {q}")
    m, lo, ridge, raw = condition_cov(V)
    est = CovEstimate(m, full, layout.coords(full), "known", 0, lo, ridge, raw)
    return est if rule == full else est.restrict(rule, layout)


@dataclass(frozen=True, eq=False)
class InformationEstimate:
    """Per-observation negative Hessian ``H_hat`` and score covariance ``J_hat``."""

    H_hat: np.ndarray
    J_hat: np.ndarray
    rule: CompositionRule
    n: int

    @property
    def godambe(self) -> np.ndarray:
        """Per-observation Godambe information ``H J^-1 H``."""
        try:
            return self.H_hat @ np.linalg.solve(self.J_hat, self.H_hat)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError("score covariance is singular") from exc


def estimate_information(model: ModelSpec, sample: GroupSample, theta_hat,
                         rule: CompositionRule, rel_step: float = 1e-5) -> InformationEstimate:
    """Finite-difference Hessian of the mean score and empirical score covariance.

    Both refer to the unnormalized sum of the active sub-likelihoods,
    averaged over observations.  The step for coordinate ``j`` is
    ``rel_step * max(|theta_j|, 1)``, shrunk when needed so perturbed
    thresholds stay ordered.
    """
    lay = model.layout
    if not lay.is_disjoint:
        raise InvalidArgumentError("information estimates need disjoint parameter blocks")
    blocks = model.block_params(theta_hat, rule)
    dw = sum(b.size for b in blocks)
    H = np.zeros((dw, dw))
    scores = []
    off = 0
    for k, th in zip(rule.active, blocks):
        p = th.size
        s = model.score_sub(k, th, sample)
        scores.append(s)
        gaps = np.abs(np.diff(th)) if p > 1 else np.array([np.inf])
        for j in range(p):
            h = rel_step * max(abs(th[j]), 1.0)
            near = [gaps[i] for i in (j - 1, j) if 0 <= i < p - 1]
            if near:
                h = min(h, 0.25 * min(near))
            tp, tm = th.copy(), th.copy()
            tp[j] += h
            tm[j] -= h
            col = -(model.score_sub(k, tp, sample).mean(axis=0)
                    - model.score_sub(k, tm, sample).mean(axis=0)) / (2 * h)
            H[off:off + p, off + j] = col
        off += p
    S = np.concatenate(scores, axis=1)
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(S))):
        raise NumericDomainError("non-finite derivative in information estimate")
    H = 0.5 * (H + H.T)
    J = np.atleast_2d(np.cov(S, rowvar=False, ddof=1)) if sample.n > 1 else np.zeros((dw, dw))
    J = 0.5 * (J + J.T)
    return InformationEstimate(H, J, rule, sample.n)
