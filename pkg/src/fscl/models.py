"""The two bundled models.

``GaussianMeanModel`` has normal coordinates with known variances; each
sub-likelihood covers one coordinate (marginal grouping) or two adjacent
coordinates (pairwise grouping) and its MCLE is the sample mean.

``LatentCategoricalModel`` thresholds a latent ``N_d(0, Sigma)`` vector into
``C`` ordered labels per variable.  Sub-likelihood ``j`` is the one-wise
multinomial likelihood of variable ``j``; its maximizer is the normal
quantile of the empirical cumulative label frequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from . import _kernels
from ._rng import generator
from .core import GroupSample, ModelSpec, ParamLayout
from .errors import InvalidArgumentError, NumericDomainError

__all__ = [
    "EPS_SEP",
    "GaussianMeanModel",
    "LatentCategoricalModel",
    "QuantileParams",
    "gaussian_fit_sub",
    "cell_prob",
    "latent_fit_quantiles",
    "latent_loglik_sub",
    "simulate_gaussian",
    "simulate_latent",
]

EPS_SEP = 1e-6
_LOG_2PI = math.log(2.0 * math.pi)


# --------------------------------------------------------------------------
# Gaussian means
# --------------------------------------------------------------------------


class GaussianMeanModel(ModelSpec):
    """Independent normal coordinates with known variance ``sigma2``."""

    def __init__(self, d: int, sigma2=1.0, grouping: str = "marginal"):
        self.d = int(d)
        s2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (self.d,)).copy()
        if self.d < 1 or not np.all(s2 > 0):
            raise InvalidArgumentError("need d >= 1 and sigma2 > 0 elementwise")
        s2.setflags(write=False)
        self.sigma2 = s2
        if grouping == "marginal":
            p = 1
        elif grouping == "pairwise":
            if self.d % 2:
                raise InvalidArgumentError("pairwise grouping needs an even dimension")
            p = 2
        else:
            raise InvalidArgumentError(f"unknown grouping {grouping!r}")
        self.grouping = grouping
        self.layout = ParamLayout.uniform(self.d // p, p)

    def __repr__(self):
        return f"GaussianMeanModel(d={self.d}, grouping={self.grouping!r})"

    def _cols(self, k: int) -> list[int]:
        return list(self.layout.shared_map[k])

    def validate(self, sample: GroupSample) -> None:
        if sample.d != self.d:
            raise InvalidArgumentError(f"sample has {sample.d} columns, model expects {self.d}")
        if not np.issubdtype(sample.data.dtype, np.number) or not np.all(np.isfinite(sample.data)):
            raise InvalidArgumentError("Gaussian model needs finite real-valued data")

    def fit_sub(self, k: int, sample: GroupSample) -> np.ndarray:
        return gaussian_fit_sub(k, sample, self)

    def fit_all(self, sample: GroupSample) -> np.ndarray:
        self.validate(sample)
        return sample.data.astype(float).mean(axis=0)

    def fit_resampled(self, sample: GroupSample, rows: np.ndarray) -> np.ndarray:
        data = np.ascontiguousarray(sample.data, dtype=float)
        return _kernels.boot_means(data, np.ascontiguousarray(rows, dtype=np.int64))

    def loglik_sub(self, k: int, theta_k, sample: GroupSample) -> float:
        cols = self._cols(k)
        y = sample.data[:, cols].astype(float)
        s2 = self.sigma2[cols]
        r = y - np.asarray(theta_k, dtype=float)
        return float(-0.5 * np.sum(r * r / s2 + np.log(s2) + _LOG_2PI))

    def score_sub(self, k: int, theta_k, sample: GroupSample) -> np.ndarray:
        cols = self._cols(k)
        return (sample.data[:, cols].astype(float) - np.asarray(theta_k, dtype=float)) / self.sigma2[cols]

    def known_cov(self, n0: int, n1: int) -> np.ndarray:
        """Exact covariance of sqrt(n0+n1) * (mean1 - mean0)."""
        n = n0 + n1
        return np.diag(n * self.sigma2 * (1.0 / n0 + 1.0 / n1))


def gaussian_fit_sub(k: int, sample: GroupSample, model: GaussianMeanModel | None = None) -> np.ndarray:
    """Per-coordinate sample means of block ``k``.

    Without a model, block ``k`` is column ``k``.
    """
    if sample.n == 0:
        raise InvalidArgumentError("cannot fit an empty sample")
    cols = model._cols(k) if model is not None else [k]
    return sample.data[:, cols].astype(float).mean(axis=0)


def simulate_gaussian(mean, sigma2, n: int, seed, group: int = 0) -> GroupSample:
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.broadcast_to(np.asarray(sigma2, dtype=float), mean.shape))
    rng = generator(seed)
    return GroupSample(mean + sd * rng.standard_normal((int(n), mean.size)), group)


# --------------------------------------------------------------------------
# Latent Gaussian categorical model
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuantileParams:
    """Thresholds ``gamma[j, c]`` (strictly increasing along rows).

    ``clamped[j]`` marks variables whose cumulative frequencies hit the
    clamping bounds; ``repaired[j]`` marks rows whose ties were split.
    """

    gamma: np.ndarray
    clamped: np.ndarray = field(default=None)
    repaired: np.ndarray = field(default=None)

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float, copy=True)
        if g.ndim == 1:
            g = g[None, :]
        if g.ndim != 2 or g.shape[1] < 1:
            raise InvalidArgumentError(f"gamma must be d x (C-1), got shape {g.shape}")
        if not np.all(np.isfinite(g)) or np.any(np.diff(g, axis=1) <= 0):
            raise InvalidArgumentError("thresholds must be finite and strictly increasing per row")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        for name in ("clamped", "repaired"):
            v = getattr(self, name)
            v = np.zeros(g.shape[0], dtype=bool) if v is None else np.asarray(v, dtype=bool).copy()
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def d(self) -> int:
        return self.gamma.shape[0]

    @property
    def C(self) -> int:
        return self.gamma.shape[1] + 1

    def ravel(self) -> np.ndarray:
        return self.gamma.ravel()


def _check_thresholds(gamma_row) -> np.ndarray:
    g = np.atleast_1d(np.asarray(gamma_row, dtype=float))
    if g.ndim != 1 or np.any(np.diff(g) <= 0) or np.any(np.isnan(g)):
        raise InvalidArgumentError(f"thresholds {g} are not strictly increasing")
    return g


def _cell_probs(g: np.ndarray) -> np.ndarray:
    # upper-tail differences are more accurate for positive thresholds
    cdf = ndtr(np.concatenate([[-np.inf], g, [np.inf]]))
    sf = ndtr(-np.concatenate([[-np.inf], g, [np.inf]]))
    lower = np.diff(cdf)
    upper = -np.diff(sf)
    mid = np.concatenate([[-np.inf], g, [np.inf]])
    use_upper = mid[:-1] > 0
    return np.where(use_upper, upper, lower)


def cell_prob(gamma_row, k: int, rho_args=None) -> float:
    """P(label = k) for thresholds ``gamma_row``; labels are ``1..C``.

    ``rho_args`` is reserved for pairwise cells and must be None.
    """
    if rho_args is not None:
        raise InvalidArgumentError("pairwise cell probabilities are not supported")
    g = _check_thresholds(gamma_row)
    C = g.size + 1
    if not 1 <= int(k) <= C:
        raise InvalidArgumentError(f"label {k} outside 1..{C}")
    return float(_cell_probs(g)[int(k) - 1])


def _label_counts(col: np.ndarray, C: int) -> np.ndarray:
    return np.bincount(np.asarray(col, dtype=np.int64), minlength=C + 1)[1:C + 1]


def _fit_from_counts(counts: np.ndarray, eps: float = EPS_SEP) -> tuple[np.ndarray, bool, bool]:
    n = int(counts.sum())
    freq = np.cumsum(counts[:-1]) / n
    lo, hi = 0.5 / n, 1.0 - 0.5 / n
    clamped = bool(np.any(freq < lo) or np.any(freq > hi))
    g = ndtri(np.clip(freq, lo, hi))
    repaired = _kernels.repair_row(g, eps)
    return g, clamped, repaired


def latent_fit_quantiles(sample: GroupSample, C: int, eps: float = EPS_SEP) -> QuantileParams:
    """Row-wise threshold MCLEs with frequency clamping and tie repair."""
    _validate_codes(sample, C)
    if sample.n < 2:
        raise InvalidArgumentError("threshold fits need at least 2 observations")
    rows, cl, rep = [], [], []
    for j in range(sample.d):
        g, c, r = _fit_from_counts(_label_counts(sample.data[:, j], C), eps)
        rows.append(g)
        cl.append(c)
        rep.append(r)
    return QuantileParams(np.array(rows), np.array(cl), np.array(rep))


def latent_loglik_sub(j: int, gamma_row, sample: GroupSample, C: int | None = None) -> float:
    """One-wise multinomial log-likelihood of variable ``j``."""
    g = _check_thresholds(gamma_row)
    C = g.size + 1 if C is None else int(C)
    if sample.n == 0:
        raise InvalidArgumentError("empty sample")
    counts = _label_counts(sample.data[:, j], C)
    if counts.sum() == 0:
        raise InvalidArgumentError("variable has no observations")
    return _loglik_counts(counts, g, j)


def _loglik_counts(counts: np.ndarray, g: np.ndarray, index: int = None) -> float:
    p = _cell_probs(g)
    nz = counts > 0
    if np.any(p[nz] <= 0):
        raise NumericDomainError("zero cell probability with non-zero count", index=index)
    return float(np.sum(counts[nz] * np.log(p[nz])))


def _validate_codes(sample: GroupSample, C: int, d: int | None = None) -> None:
    x = sample.data
    if d is not None and sample.d != d:
        raise InvalidArgumentError(f"sample has {sample.d} variables, model expects {d}")
    if not np.issubdtype(x.dtype, np.integer):
        if not np.all(np.isfinite(x)) or np.any(x != np.round(x)):
            raise InvalidArgumentError("categorical data must be integer codes")
    if x.size and (x.min() < 1 or x.max() > C):
        raise InvalidArgumentError(f"labels must lie in 1..{C}")


class LatentCategoricalModel(ModelSpec):
    """Thresholded latent Gaussian model with ``d`` variables and ``C`` labels."""

    def __init__(self, d: int, C: int = 3, Sigma=None):
        self.d = int(d)
        self.C = int(C)
        if self.d < 1 or self.C < 2:
            raise InvalidArgumentError("need d >= 1 and C >= 2")
        S = np.eye(self.d) if Sigma is None else np.array(Sigma, dtype=float)
        if S.shape != (self.d, self.d) or not np.allclose(S, S.T) or not np.allclose(np.diag(S), 1.0):
            raise InvalidArgumentError("Sigma must be a symmetric d x d correlation matrix")
        try:
            self._chol = np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise InvalidArgumentError("Sigma is not positive definite") from exc
        S.setflags(write=False)
        self.Sigma = S
        self.layout = ParamLayout.uniform(self.d, self.C - 1)
        self._tables: dict[int, np.ndarray] = {}

    def __repr__(self):
        return f"LatentCategoricalModel(d={self.d}, C={self.C})"

    def validate(self, sample: GroupSample) -> None:
        _validate_codes(sample, self.C, self.d)

    def codes(self, sample: GroupSample) -> np.ndarray:
        return np.ascontiguousarray(sample.data, dtype=np.int64)

    def fit_quantiles(self, sample: GroupSample) -> QuantileParams:
        return latent_fit_quantiles(sample, self.C)

    def fit_sub(self, k: int, sample: GroupSample) -> np.ndarray:
        self.validate(sample)
        g, _, _ = _fit_from_counts(_label_counts(sample.data[:, k], self.C))
        return g

    def fit_all(self, sample: GroupSample) -> np.ndarray:
        return self.fit_quantiles(sample).ravel()

    def _table(self, m: int) -> np.ndarray:
        t = self._tables.get(m)
        if t is None:
            t = _kernels.quantile_table(m)
            self._tables[m] = t
        return t

    def fit_resampled(self, sample: GroupSample, rows: np.ndarray) -> np.ndarray:
        rows = np.ascontiguousarray(rows, dtype=np.int64)
        return _kernels.boot_quantiles(self.codes(sample), rows, self.C, self._table(rows.shape[1]),
                                       EPS_SEP)

    def loglik_sub(self, k: int, theta_k, sample: GroupSample) -> float:
        g = _check_thresholds(theta_k)
        return _loglik_counts(_label_counts(sample.data[:, k], self.C), g, k)

    def score_sub(self, k: int, theta_k, sample: GroupSample) -> np.ndarray:
        g = _check_thresholds(theta_k)
        p = _cell_probs(g)
        phi = np.exp(-0.5 * g * g) / math.sqrt(2.0 * math.pi)
        lab = np.asarray(sample.data[:, k], dtype=np.int64)
        out = np.zeros((lab.size, self.C - 1))
        rows = np.arange(lab.size)
        up = lab <= self.C - 1  # threshold gamma_lab bounds the cell from above
        out[rows[up], lab[up] - 1] = phi[lab[up] - 1] / p[lab[up] - 1]
        lo = lab >= 2
        out[rows[lo], lab[lo] - 2] -= phi[lab[lo] - 2] / p[lab[lo] - 1]
        return out

    def loglik_sub_from_counts(self, counts: np.ndarray, gamma_row) -> float:
        return _loglik_counts(np.asarray(counts), _check_thresholds(gamma_row))


def simulate_latent(model: LatentCategoricalModel, gamma, n: int, seed, group: int = 0) -> GroupSample:
    """Draw ``n`` labelled vectors by thresholding latent normal draws."""
    n = int(n)
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    g = gamma.gamma if isinstance(gamma, QuantileParams) else np.atleast_2d(np.asarray(gamma, dtype=float))
    if g.shape != (model.d, model.C - 1):
        raise InvalidArgumentError(f"gamma has shape {g.shape}, expected {(model.d, model.C - 1)}")
    rng = generator(seed)
    z = rng.standard_normal((n, model.d))
    if not np.array_equal(model.Sigma, np.eye(model.d)):
        z = z @ model._chol.T
    labels = 1 + (z[:, :, None] > g[None, :, :]).sum(axis=2)
    return GroupSample(labels.astype(np.int8), group)
