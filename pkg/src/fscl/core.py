"""Composition rules, parameter layouts and the sub-likelihood model interface.

Sub-likelihood indices are 0-based throughout the Python API.  A composition
rule is a binary weight vector ``w`` over the ``N_cl`` sub-likelihoods of a
model; the composite log-likelihood under ``w`` is the weighted *mean*

    l_cl(theta; w) = (sum_k w_k)^-1 * sum_k w_k * l_k(theta_k)

so that CL-BIC magnitudes stay comparable across rules of different size.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError, NumericDomainError

__all__ = [
    "CompositionRule",
    "ParamLayout",
    "GroupSample",
    "ModelSpec",
    "make_rule",
    "augment",
    "remove",
    "composite_loglik",
]


@dataclass(frozen=True)
class CompositionRule:
    """Binary weight vector over ``n_sub`` sub-likelihoods."""

    weights: tuple[bool, ...]

    def __post_init__(self):
        if len(self.weights) < 1:
            raise InvalidArgumentError("a composition rule needs at least one sub-likelihood")
        object.__setattr__(self, "weights", tuple(bool(x) for x in self.weights))

    @classmethod
    def full(cls, n_sub: int) -> "CompositionRule":
        return cls((True,) * int(n_sub))

    @classmethod
    def empty(cls, n_sub: int) -> "CompositionRule":
        """All-zero rule; only meaningful as the start state of a search."""
        return cls((False,) * int(n_sub))

    @property
    def n_sub(self) -> int:
        return len(self.weights)

    @property
    def active(self) -> tuple[int, ...]:
        return tuple(i for i, x in enumerate(self.weights) if x)

    @property
    def size(self) -> int:
        return sum(self.weights)

    @property
    def is_empty(self) -> bool:
        return not any(self.weights)

    def as_array(self) -> np.ndarray:
        return np.array(self.weights, dtype=np.int8)

    def __contains__(self, k: int) -> bool:
        return 0 <= k < self.n_sub and self.weights[k]

    def __str__(self) -> str:
        return "".join("1" if x else "0" for x in self.weights)


def make_rule(active_indices: Iterable[int], n_sub: int) -> CompositionRule:
    """Rule with exactly the given (0-based) indices switched on."""
    n_sub = int(n_sub)
    if n_sub < 1:
        raise InvalidArgumentError(f"n_sub must be >= 1, got {n_sub}")
    idx = [int(i) for i in active_indices]
    if len(set(idx)) != len(idx):
        raise InvalidArgumentError(f"duplicate indices in {idx}")
    bad = [i for i in idx if not 0 <= i < n_sub]
    if bad:
        raise InvalidArgumentError(f"indices {bad} outside [0, {n_sub - 1}]")
    w = [False] * n_sub
    for i in idx:
        w[i] = True
    return CompositionRule(tuple(w))


def augment(rule: CompositionRule, i: int) -> CompositionRule:
    """Return ``rule`` with sub-likelihood ``i`` added."""
    if not 0 <= i < rule.n_sub:
        raise InvalidArgumentError(f"index {i} outside [0, {rule.n_sub - 1}]")
    if rule.weights[i]:
        raise InvalidArgumentError(f"sub-likelihood {i} is already active")
    w = list(rule.weights)
    w[i] = True
    return CompositionRule(tuple(w))


def remove(rule: CompositionRule, i: int) -> CompositionRule:
    """Return ``rule`` with sub-likelihood ``i`` removed."""
    if not 0 <= i < rule.n_sub:
        raise InvalidArgumentError(f"index {i} outside [0, {rule.n_sub - 1}]")
    if not rule.weights[i]:
        raise InvalidArgumentError(f"sub-likelihood {i} is not active")
    w = list(rule.weights)
    w[i] = False
    return CompositionRule(tuple(w))


@dataclass(frozen=True)
class ParamLayout:
    """Parameter bookkeeping for the sub-likelihood blocks.

    ``blocks[k]`` is the dimension of the parameter block of sub-likelihood
    ``k``.  ``shared_map[k]`` lists the effective coordinates of theta used
    by that block; it defaults to consecutive disjoint ranges.  Overlapping
    maps describe designs where sub-likelihoods share parameters.  Such
    designs can have more block coordinates than effective coordinates; the
    layout keeps both counts but nothing here depends on the block total.
    """

    blocks: tuple[int, ...]
    shared_map: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        blocks = tuple(int(p) for p in self.blocks)
        if not blocks or any(p < 1 for p in blocks):
            raise InvalidArgumentError(f"block dimensions must be >= 1, got {blocks}")
        object.__setattr__(self, "blocks", blocks)
        if not self.shared_map:
            offsets = np.concatenate([[0], np.cumsum(blocks)])
            smap = tuple(tuple(range(offsets[k], offsets[k + 1])) for k in range(len(blocks)))
            object.__setattr__(self, "shared_map", smap)
        else:
            smap = tuple(tuple(int(c) for c in m) for m in self.shared_map)
            if len(smap) != len(blocks) or any(len(m) != p for m, p in zip(smap, blocks)):
                raise InvalidArgumentError("shared_map does not match block dimensions")
            object.__setattr__(self, "shared_map", smap)

    @classmethod
    def uniform(cls, n_sub: int, p: int) -> "ParamLayout":
        return cls((int(p),) * int(n_sub))

    @property
    def n_sub(self) -> int:
        return len(self.blocks)

    @property
    def total_dim(self) -> int:
        """Dimension q of the full effective parameter vector."""
        return len({c for m in self.shared_map for c in m})

    @property
    def block_total(self) -> int:
        return sum(self.blocks)

    @property
    def is_disjoint(self) -> bool:
        return self.block_total == self.total_dim

    @property
    def common_block_dim(self) -> int | None:
        return self.blocks[0] if len(set(self.blocks)) == 1 else None

    def coords(self, rule: CompositionRule) -> np.ndarray:
        """Effective coordinates of theta(w), in block order, without repeats."""
        self._check(rule)
        seen: dict[int, None] = {}
        for k in rule.active:
            for c in self.shared_map[k]:
                seen.setdefault(c, None)
        return np.fromiter(seen, dtype=np.intp, count=len(seen))

    def d_w(self, rule: CompositionRule) -> int:
        return int(self.coords(rule).size)

    def block_offsets(self, rule: CompositionRule) -> tuple[int, ...]:
        """Start offsets of each active block inside the stacked vector (disjoint layouts)."""
        self._check(rule)
        off, out = 0, []
        for k in rule.active:
            out.append(off)
            off += self.blocks[k]
        return tuple(out)

    def _check(self, rule: CompositionRule):
        if rule.n_sub != self.n_sub:
            raise InvalidArgumentError(f"rule has {rule.n_sub} weights, layout has {self.n_sub} blocks")


@dataclass(frozen=True, eq=False)
class GroupSample:
    """Observations of one group: an ``n_g x d`` array and a 0/1 group label."""

    data: np.ndarray
    group: int = 0

    def __post_init__(self):
        arr = np.array(self.data, copy=True)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise InvalidArgumentError(f"sample data must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise InvalidArgumentError("sample must contain at least one observation")
        if self.group not in (0, 1):
            raise InvalidArgumentError(f"group label must be 0 or 1, got {self.group!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def take(self, rows: np.ndarray) -> "GroupSample":
        return GroupSample(self.data[np.asarray(rows)], self.group)


class ModelSpec(ABC):
    """A model decomposed into ``n_sub`` sub-likelihoods with parameter blocks.

    Subclasses implement the per-block fit, log-likelihood and
    per-observation score.  ``fit_all`` and ``fit_resampled`` have generic
    implementations that concrete models override with vectorized kernels.
    """

    layout: ParamLayout

    @property
    def n_sub(self) -> int:
        return self.layout.n_sub

    @abstractmethod
    def validate(self, sample: GroupSample) -> None:
        """Raise InvalidArgumentError if ``sample`` does not fit the model."""

    @abstractmethod
    def fit_sub(self, k: int, sample: GroupSample) -> np.ndarray:
        """Maximizer of sub-likelihood ``k`` on ``sample``."""

    @abstractmethod
    def loglik_sub(self, k: int, theta_k: np.ndarray, sample: GroupSample) -> float:
        """Sub-likelihood ``k`` summed over the observations."""

    @abstractmethod
    def score_sub(self, k: int, theta_k: np.ndarray, sample: GroupSample) -> np.ndarray:
        """Per-observation gradient of sub-likelihood ``k``, shape ``(n, p_k)``."""

    def fit_all(self, sample: GroupSample) -> np.ndarray:
        """Stacked fits of every block (the MCLE under the full rule)."""
        self.validate(sample)
        return np.concatenate([np.atleast_1d(self.fit_sub(k, sample)) for k in range(self.n_sub)])

    def fit_resampled(self, sample: GroupSample, rows: np.ndarray) -> np.ndarray:
        """Full-rule fits for each row-index set in ``rows`` (shape ``(B, m)``)."""
        rows = np.asarray(rows)
        return np.stack([self.fit_all(sample.take(r)) for r in rows])

    def block_params(self, theta: np.ndarray, rule: CompositionRule) -> list[np.ndarray]:
        """Split a stacked theta(w) into per-active-block vectors."""
        theta = np.asarray(theta, dtype=float)
        coords = self.layout.coords(rule)
        if theta.shape != (coords.size,):
            raise InvalidArgumentError(f"theta has shape {theta.shape}, rule needs ({coords.size},)")
        pos = {c: i for i, c in enumerate(coords)}
        return [theta[[pos[c] for c in self.layout.shared_map[k]]] for k in rule.active]


def composite_loglik(model: ModelSpec, sample: GroupSample, theta: Sequence[float],
                     rule: CompositionRule) -> float:
    """Normalized composite log-likelihood of ``theta`` (stacked over active blocks)."""
    if rule.is_empty:
        raise InvalidArgumentError("composite likelihood of the empty rule is undefined")
    model.validate(sample)
    total = 0.0
    for k, th in zip(rule.active, model.block_params(np.asarray(theta, dtype=float), rule)):
        v = float(model.loglik_sub(k, th, sample))
        if not math.isfinite(v):
            raise NumericDomainError(f"sub-likelihood {k} is not finite ({v})", index=k)
        total += v
    return total / rule.size
