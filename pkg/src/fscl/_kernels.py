"""Hot loops, compiled with numba when available.

Every kernel has a numpy twin with the same signature.  The numba versions
are used unless numba is missing or ``FSCL_DISABLE_NUMBA`` is set to a
non-empty value other than ``0``.  Both families are importable under their
own names (``*_numba`` / ``*_numpy``) for benchmarking and cross-checks.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.linalg import solve_triangular

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap(args[0]) if args and callable(args[0]) else wrap


def _env_disabled() -> bool:
    v = os.environ.get("FSCL_DISABLE_NUMBA", "")
    return v not in ("", "0")


USE_NUMBA = HAVE_NUMBA and not _env_disabled()

TIE_RTOL = 1e-12


# --------------------------------------------------------------------------
# Threshold fits of resampled categorical data
# --------------------------------------------------------------------------


def quantile_table(m: int) -> np.ndarray:
    """``ndtri`` of clamped cumulative frequencies ``c/m`` for ``c = 0..m``."""
    from scipy.special import ndtri

    lo, hi = 0.5 / m, 1.0 - 0.5 / m
    return ndtri(np.clip(np.arange(m + 1) / m, lo, hi))


def repair_row(g: np.ndarray, eps: float) -> bool:
    """Spread runs of equal thresholds symmetrically by ``eps`` (in place)."""
    changed = False
    L = g.shape[0]
    i = 0
    while i < L:
        j = i
        while j + 1 < L and g[j + 1] == g[i]:
            j += 1
        if j > i:
            v = g[i]
            half = (j - i) / 2.0
            for t in range(i, j + 1):
                g[t] = v + ((t - i) - half) * eps
            changed = True
        i = j + 1
    return changed


_repair_row_nb = njit(cache=True, nogil=True)(repair_row) if HAVE_NUMBA else repair_row


def boot_quantiles_numpy(codes: np.ndarray, rows: np.ndarray, C: int, table: np.ndarray,
                         eps: float) -> np.ndarray:
    """Thresholds fitted to each resample; returns ``(B, d*(C-1))``."""
    B = rows.shape[0]
    d = codes.shape[1]
    sub = codes[rows]  # (B, m, d)
    cum = np.empty((B, d, C - 1), dtype=np.int64)
    for c in range(1, C):
        cum[:, :, c - 1] = (sub <= c).sum(axis=1)
    g = table[cum]
    flat = g.reshape(-1, C - 1)
    ties = np.nonzero((np.diff(flat, axis=1) <= 0).any(axis=1))[0]
    for r in ties:
        repair_row(flat[r], eps)
    return flat.reshape(B, d * (C - 1))


@njit(cache=True, nogil=True)
def boot_quantiles_numba(codes, rows, C, table, eps):
    B, m = rows.shape
    d = codes.shape[1]
    out = np.empty((B, d * (C - 1)))
    counts = np.zeros(C + 1, dtype=np.int64)
    g = np.empty(C - 1)
    for b in range(B):
        for j in range(d):
            counts[:] = 0
            for i in range(m):
                counts[codes[rows[b, i], j]] += 1
            cum = 0
            for c in range(1, C):
                cum += counts[c]
                g[c - 1] = table[cum]
            _repair_row_nb(g, eps)
            for c in range(C - 1):
                out[b, j * (C - 1) + c] = g[c]
    return out


# --------------------------------------------------------------------------
# Means of resampled real-valued data
# --------------------------------------------------------------------------


def boot_means_numpy(data: np.ndarray, rows: np.ndarray) -> np.ndarray:
    return data[rows].mean(axis=1)


@njit(cache=True, nogil=True)
def boot_means_numba(data, rows):
    B, m = rows.shape
    d = data.shape[1]
    out = np.zeros((B, d))
    for b in range(B):
        for i in range(m):
            r = rows[b, i]
            for j in range(d):
                out[b, j] += data[r, j]
        for j in range(d):
            out[b, j] /= m
    return out


# --------------------------------------------------------------------------
# Greedy forward search over sub-likelihood blocks
# --------------------------------------------------------------------------
#
# With A the active coordinates, L = chol(V[A, A]) and z = L^-1 delta[A], the
# candidate block c has
#     W = L^-1 V[A, c],  u = delta[c] - W'z,  S = V[c, c] - W'W = M M'
# and lambda(A + c) = lambda(A) + n |M^-1 u|^2.  The increment is a sum of
# squares, so the path statistic is non-decreasing in floating point too.


def _pick(lam: np.ndarray, active: np.ndarray) -> int:
    best = -np.inf
    for i in range(lam.shape[0]):
        if not active[i] and lam[i] > best:
            best = lam[i]
    thr = best - TIE_RTOL * abs(best)
    for i in range(lam.shape[0]):
        if not active[i] and lam[i] >= thr:
            return i
    return -1


_pick_nb = njit(cache=True, nogil=True)(_pick) if HAVE_NUMBA else _pick


def forward_path_numpy(delta: np.ndarray, V: np.ndarray, n: float, blocks: np.ndarray,
                       n_steps: int):
    """Greedy path; returns ``(chosen, lam, stat, ok)``.

    ``lam[t, i]`` is the candidate value at step ``t`` (NaN for blocks already
    active), ``stat[t]`` the statistic after step ``t``.  ``ok`` is False when
    a Schur complement was not positive definite.
    """
    N, p = blocks.shape
    chosen = np.full(n_steps, -1, dtype=np.int64)
    lam = np.full((n_steps, N), np.nan)
    stat = np.zeros(n_steps)
    active = np.zeros(N, dtype=np.bool_)
    A = np.empty(0, dtype=np.int64)
    L = np.zeros((0, 0))
    z = np.zeros(0)
    cur = 0.0
    keep = {}
    for t in range(n_steps):
        keep.clear()
        for i in range(N):
            if active[i]:
                continue
            c = blocks[i]
            if A.size:
                W = solve_triangular(L, V[np.ix_(A, c)], lower=True, check_finite=False)
                u = delta[c] - W.T @ z
                S = V[np.ix_(c, c)] - W.T @ W
            else:
                W = np.zeros((0, p))
                u = delta[c].copy()
                S = V[np.ix_(c, c)].copy()
            try:
                M = np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                return chosen, lam, stat, False
            y = solve_triangular(M, u, lower=True, check_finite=False)
            lam[t, i] = cur + n * float(y @ y)
            keep[i] = (W, M, y)
        h = _pick(lam[t], active)
        W, M, y = keep[h]
        a = A.size
        Ln = np.zeros((a + p, a + p))
        Ln[:a, :a] = L
        Ln[a:, :a] = W.T
        Ln[a:, a:] = M
        L = Ln
        z = np.concatenate([z, y])
        A = np.concatenate([A, blocks[h]])
        cur = lam[t, h]
        active[h] = True
        chosen[t] = h
        stat[t] = cur
    return chosen, lam, stat, True


@njit(cache=True, nogil=True)
def forward_path_numba(delta, V, n, blocks, n_steps):
    N, p = blocks.shape
    q = N * p
    chosen = np.full(n_steps, -1, dtype=np.int64)
    lam = np.full((n_steps, N), np.nan)
    stat = np.zeros(n_steps)
    active = np.zeros(N, dtype=np.bool_)
    A = np.empty(q, dtype=np.int64)
    L = np.zeros((q, q))
    z = np.zeros(q)
    Wall = np.zeros((N, q, p))
    Mall = np.zeros((N, p, p))
    yall = np.zeros((N, p))
    S = np.zeros((p, p))
    u = np.zeros(p)
    a = 0
    cur = 0.0
    for t in range(n_steps):
        for i in range(N):
            if active[i]:
                continue
            # W = L^-1 V[A, c] by forward substitution, column by column
            for col in range(p):
                cc = blocks[i, col]
                for r in range(a):
                    s = V[A[r], cc]
                    for m in range(r):
                        s -= L[r, m] * Wall[i, m, col]
                    Wall[i, r, col] = s / L[r, r]
            for r in range(p):
                s = delta[blocks[i, r]]
                for m in range(a):
                    s -= Wall[i, m, r] * z[m]
                u[r] = s
                for col in range(p):
                    s2 = V[blocks[i, r], blocks[i, col]]
                    for m in range(a):
                        s2 -= Wall[i, m, r] * Wall[i, m, col]
                    S[r, col] = s2
            # Cholesky of the Schur complement
            for r in range(p):
                for col in range(r + 1):
                    s = S[r, col]
                    for m in range(col):
                        s -= Mall[i, r, m] * Mall[i, col, m]
                    if r == col:
                        if not s > 0.0:
                            return chosen, lam, stat, False
                        Mall[i, r, r] = np.sqrt(s)
                    else:
                        Mall[i, r, col] = s / Mall[i, col, col]
                for col in range(r + 1, p):
                    Mall[i, r, col] = 0.0
            inc = 0.0
            for r in range(p):
                s = u[r]
                for m in range(r):
                    s -= Mall[i, r, m] * yall[i, m]
                yall[i, r] = s / Mall[i, r, r]
                inc += yall[i, r] * yall[i, r]
            lam[t, i] = cur + n * inc
        h = _pick_nb(lam[t], active)
        for r in range(p):
            for m in range(a):
                L[a + r, m] = Wall[h, m, r]
            for col in range(p):
                L[a + r, a + col] = Mall[h, r, col]
            z[a + r] = yall[h, r]
            A[a + r] = blocks[h, r]
        a += p
        cur = lam[t, h]
        active[h] = True
        chosen[t] = h
        stat[t] = cur
    return chosen, lam, stat, True


if USE_NUMBA:
    boot_quantiles = boot_quantiles_numba
    boot_means = boot_means_numba
    forward_path = forward_path_numba
else:
    boot_quantiles = boot_quantiles_numpy
    boot_means = boot_means_numpy
    forward_path = forward_path_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
