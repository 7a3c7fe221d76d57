"""Arbitrary-precision evaluation of the ordered-gamma density series.

For the sum ``S`` of the ``k`` largest of ``K`` i.i.d. Gamma(nu, 1) variables
and ``s = K - k``,

    f_S(x) = k C(K, k) / Gamma(nu+1)^s * sum_r (-1)^r d_{r,s} l_{r,k} / r! * g_{nu K + r}(x).

The terms alternate and grow to roughly ``exp(s x)`` before decaying, so for
the configurations of interest the partial sums cancel through hundreds of
digits.  The engine therefore:

1. plans the truncation order and working precision from double-precision
   logarithms of the term magnitudes,
2. builds coefficient tables ``c_r = d_{r,s} l_{r,k} / (r! Gamma(nu K + r))``
   in ball arithmetic (FLINT/Arb) at that precision, and
3. evaluates the alternating polynomial and checks the first omitted term
   against the sum.

``d_{r,s} / r!`` comes from the recursion written as a convolution of
exponential generating functions.  ``l_{r,k}`` has closed forms for ``k = 1``
and ``nu = 1``, and otherwise is a trapezoid sum in ``y`` under the map
``x = exp(y - exp(-y))``, which decays doubly exponentially at both ends.
The step is halved until two successive sums agree to the working precision.
"""

from __future__ import annotations

import math
import threading

import numpy as np
from flint import arb, arb_series, ctx
from scipy.special import gammaincc, gammaln, logsumexp

from .errors import ConvergenceError

LN2 = math.log(2.0)
GUARD_BITS = 64

# Arb's working precision lives in a process-wide context, so every
# high-precision section runs under this lock.
_ARB_LOCK = threading.RLock()


class _workprec:
    def __init__(self, bits: int, cap: int | None = None):
        self.bits, self.cap = int(bits), cap

    def __enter__(self):
        _ARB_LOCK.acquire()
        self._saved = (ctx.prec, ctx.cap)
        ctx.prec = self.bits
        if self.cap is not None:
            ctx.cap = int(self.cap)

    def __exit__(self, *exc):
        ctx.prec, ctx.cap = self._saved
        _ARB_LOCK.release()


def log_upper_gamma_reg(nu: float, x: np.ndarray) -> np.ndarray:
    """log Q(nu, x) without underflow for large x."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    q = gammaincc(nu, x)
    ok = q > 1e-280
    out[ok] = np.log(q[ok])
    big = x[~ok]
    if big.size:
        # asymptotic series  Gamma(nu, x) ~ x^(nu-1) e^-x sum_m (nu-1)...(nu-m) / x^m
        term = np.ones_like(big)
        acc = np.ones_like(big)
        for m in range(1, 12):
            term = term * (nu - m) / big
            acc = acc + term
        out[~ok] = (nu - 1.0) * np.log(big) - big - gammaln(nu) + np.log(acc)
    return out


class _Map:
    """Nodes of the trapezoid rule for ``x = exp(y - exp(-y))``."""

    def __init__(self, y0: float, y1: float, h: float):
        n = int(math.ceil((y1 - y0) / h))
        self.y0, self.h, self.n = y0, h, n
        self.y = y0 + h * np.arange(n + 1)

    @staticmethod
    def x_of(y):
        return np.exp(y - np.exp(-y))

    @staticmethod
    def log_jac(y):
        # dx/dy = x (1 + e^-y)
        return (y - np.exp(-y)) + np.log1p(np.exp(-y))


class SeriesEngine:
    """Cached tables and evaluation for one ``(K, k, p')`` configuration."""

    def __init__(self, K: int, k: int, p_prime: float):
        self.K, self.k, self.p_prime = int(K), int(k), float(p_prime)
        self.nu = self.p_prime / 2.0
        self.s = self.K - self.k
        self.log_pref = (math.log(self.k) + math.lgamma(self.K + 1) - math.lgamma(self.k + 1)
                         - math.lgamma(self.s + 1) - self.s * math.lgamma(self.nu + 1.0))
        self._lock = threading.RLock()
        self._logc = np.zeros(0)  # double-precision log c_r
        self._prec = 0
        self._coef: list = []
        self.last_info: dict = {}

    # ---------------- double-precision planning tables ----------------

    def _log_d_over_fact(self, R: int) -> np.ndarray:
        """log(d_{r,s} / r!) for r <= R.

        Every quantity in the recursion is positive, so a short working
        precision gives accurate logarithms; Arb's exponent range avoids the
        overflow a float64 table would hit.
        """
        if self.s == 0:
            out = np.full(R + 1, -np.inf)
            out[0] = 0.0
            return out
        with _workprec(64, cap=R + 1):
            d = self._hp_d(R)
            return np.array([float(c.log().mid()) for c in d])

    def _log_l(self, R: int) -> np.ndarray:
        nu, s, k = self.nu, self.s, self.k
        r = np.arange(R + 1)
        a = nu * s + r
        if k == 1:
            return gammaln(a + nu) - math.lgamma(nu)
        if nu == 1.0:
            return gammaln(a + 1.0) - (a + 1.0) * math.log(k)
        y0, y1 = self._y_range(R, 200 * LN2)
        m = _Map(y0, y1, min(0.01, (y1 - y0) / 4000))
        x = m.x_of(m.y)
        base = (m.log_jac(m.y) + (nu - 1.0) * np.log(x) - x - math.lgamma(nu)
                + (k - 1) * log_upper_gamma_reg(nu, x))
        lx = np.log(x)
        out = np.empty(R + 1)
        for i in range(R + 1):
            out[i] = logsumexp(base + a[i] * lx) + math.log(m.h)
        return out

    def _y_range(self, R: int, depth: float) -> tuple[float, float]:
        """y-interval outside which every integrand is ``exp(-depth)`` below its peak."""
        nu, s, k = self.nu, self.s, self.k
        a_lo = nu * s + nu
        a_hi = nu * s + R + nu
        # left end: x^a_lo with x = exp(-e^-y) -> a_lo * e^-y >= depth + margin
        y0 = -math.log((depth + 40.0) / a_lo) - 0.5
        # right end: x^a_hi e^(-k x) falls by depth beyond its peak
        xp = a_hi / k
        x1 = xp
        while a_hi * math.log(x1 / xp) - k * (x1 - xp) > -(depth + 40.0):
            x1 *= 1.25
        y1 = math.log(x1) + 0.5
        return y0, y1

    def _plan_tables(self, R: int):
        with self._lock:
            if self._logc.size > R:
                return
            R2 = max(R, int(1.5 * self._logc.size), 64)
            ld = self._log_d_over_fact(R2)
            ll = self._log_l(R2)
            self._logc = ld + ll - gammaln(self.nu * self.K + np.arange(R2 + 1))

    def plan(self, x: float, target_log: float, r_max: int | None = None) -> tuple[int, int, float]:
        """Return ``(R, precision_bits, log max term)`` for an absolute error ``exp(target_log)``."""
        lx = math.log(x)
        base = self.log_pref + (self.nu * self.K - 1.0) * lx - x
        R = 64 if r_max is None else int(r_max)
        while True:
            self._plan_tables(R + 1)
            lt = base + self._logc[:R + 2] + np.arange(R + 2) * lx
            top = int(np.argmax(lt))
            if r_max is not None:
                break
            tail = lt[top:]
            below = np.nonzero((tail < target_log) & (np.diff(np.concatenate([tail, [-np.inf]])) < 0))[0]
            if below.size:
                R = top + int(below[0])
                break
            R *= 2
            if R > 200000:
                raise ConvergenceError("series planning exceeded 200000 terms",
                                       diagnostics={"x": x, "K": self.K, "k": self.k})
        lmax = float(lt[:R + 1].max())
        bits = int(math.ceil((lmax - min(target_log, lmax)) / LN2)) + GUARD_BITS
        return R, bits, lmax

    # ---------------- high-precision tables ----------------

    def _nu(self):
        return arb(self.p_prime) / 2

    def _hp_d(self, R: int) -> list:
        """d_{r,s} / r! for r <= R (call under ``_workprec`` with ``cap = R + 1``)."""
        nu, s = self._nu(), self.s
        if s == 0:
            return [arb(1)] + [arb(0)] * R
        ct, e1 = [], []
        fac = arb(1)
        for m in range(R + 1):
            if m:
                fac *= m
            ct.append(1 / ((nu + 1 + m) * fac))
            e1.append(nu / ((nu + m) * fac))
        ct = arb_series(ct)
        e = arb_series(e1)
        for layer in range(2, s + 1):
            # d_{r+1,s} / r! = nu s sum_j [c_{r-j} / (r-j)!] [d_{j,s-1} / j!]
            e = 1 + nu * layer * (ct * e).integral()
        return list(e.coeffs()) + [arb(0)] * (R + 1 - len(e.coeffs()))

    def _hp_l(self, R: int, bits: int) -> list:
        s, k = self.s, self.k
        nu = self._nu()
        a0 = nu * s
        if k == 1:
            out = [(a0 + nu).gamma() / nu.gamma()]
            for r in range(R):
                out.append(out[-1] * (a0 + nu + r))
            return out
        if self.nu == 1.0:
            out = [(a0 + 1).gamma() / arb(k) ** (a0 + 1)]
            for r in range(R):
                out.append(out[-1] * (a0 + 1 + r) / k)
            return out
        return self._hp_l_trapezoid(R, bits)

    def _hp_l_trapezoid(self, R: int, bits: int) -> list:
        s, k = self.s, self.k
        nu = self._nu()
        a0 = nu * s
        depth = bits * LN2
        y0, y1 = self._y_range(R, depth)
        a_hi = self.nu * s + R + self.nu
        h = 0.7 * math.pi * math.sqrt(2.0 / (max(a_hi / k, 1.0) * depth))
        gnu = nu.gamma()
        levels = 8
        fine = h / 2 ** levels
        cache: dict[int, tuple] = {}

        def node(key: int):
            # x^(a0 + nu) Q(nu, x)^(k-1) e^-x / Gamma(nu) * dx/dy at y = y0 + key * fine
            w = cache.get(key)
            if w is None:
                # Arb's Q(nu, x) can shed ~100 bits for moderate x; retry wider
                for extra in (16, 80, 208, 464, 976, 2000):
                    with _workprec(bits + extra):
                        y = arb(y0) + arb(fine) * key
                        ey = (-y).exp()
                        x = (y - ey).exp()
                        q = x.gamma_upper(nu, regularized=1)
                        wt = x ** (a0 + nu) * q ** (k - 1) * (-x).exp() / gnu * (1 + ey)
                    if wt.mid() > 0 and wt.rad() <= wt.mid() * arb(2) ** (8 - bits):
                        break
                else:
                    raise ConvergenceError("quadrature weight lost precision",
                                           diagnostics={"y": y0 + fine * key, "bits": bits})
                w = (+wt, +x)
                cache[key] = w
            return w

        n_top = int(math.ceil((y1 - y0) / fine))
        sums = [arb(0)] * (R + 1)

        def add(keys) -> None:
            # accumulate sum_i W_i X_i^r over new nodes
            for r0 in range(0, len(keys), 512):
                part = keys[r0:r0 + 512]
                W = np.empty(len(part), dtype=object)
                X = np.empty(len(part), dtype=object)
                for i, key in enumerate(part):
                    W[i], X[i] = node(key)
                P = W
                for r in range(R + 1):
                    sums[r] = sums[r] + sum(P.tolist(), arb(0))
                    if r < R:
                        P = P * X

        def moments(level: int) -> list:
            hm = arb(fine) * 2 ** (levels - level)
            return [hm * v for v in sums]

        stride = 2 ** levels
        add(list(range(0, n_top + stride, stride)))
        prev = moments(0)
        tol = arb(2) ** (-(bits - 16))
        worst = None
        for level in range(1, levels + 1):
            stride = 2 ** (levels - level)
            add(list(range(stride, n_top + 2 * stride, 2 * stride)))
            cur = moments(level)
            worst = max(abs(c.mid() - p.mid()) / c.mid() for c, p in zip(cur, prev))
            if worst <= tol:
                self.l_nodes = len(cache)
                return cur
            prev = cur
        raise ConvergenceError("trapezoid sums for l_{r,k} did not converge",
                               diagnostics={"K": self.K, "k": self.k, "p_prime": self.p_prime,
                                            "bits": bits, "R": R, "rel_change": float(worst)})

    def _ensure(self, R: int, bits: int):
        with self._lock:
            if self._prec >= bits and len(self._coef) > R + 1:
                return
            if self._prec:
                bits = max(bits, int(1.15 * self._prec))
                R = max(R, int(1.15 * (len(self._coef) - 2)))
            with _workprec(bits, cap=R + 2):
                D = self._hp_d(R + 1)
                L = self._hp_l(R + 1, bits)
                nuK = self._nu() * self.K
                ig = 1 / nuK.gamma()
                coef = []
                for r in range(R + 2):
                    coef.append(D[r] * L[r] * ig)
                    ig = ig / (nuK + r)
            self._coef = coef
            self._prec = bits

    def _log_f_guess(self, x: float) -> float:
        # all k top variables large: sum ~ C(K, k) Gamma(nu k)
        k, nu = self.k, self.nu
        return (math.lgamma(self.K + 1) - math.lgamma(k + 1) - math.lgamma(self.K - k + 1)
                + (nu * k - 1) * math.log(x) - x - math.lgamma(nu * k))

    def _start_target(self, x: float, rel_tol: float) -> float:
        return min(DEFAULT_TARGET, self._log_f_guess(x) + math.log(rel_tol) - 6 * math.log(10.0))

    def prepare(self, x_max: float, rel_tol: float = 1e-10):
        """Build tables good enough for every ``x <= x_max`` in one pass."""
        if self.s == 0 or x_max <= 0:
            return
        target = self._start_target(x_max, rel_tol) - 6 * math.log(10.0)
        R, bits, _ = self.plan(x_max, target)
        self._ensure(int(R * 1.1) + 4, bits + 16)

    # ---------------- evaluation ----------------

    def density_s(self, x: float, r_max: int | None = None, rel_tol: float = 1e-10) -> float:
        """f_S(x) with the truncation and rounding checks described above."""
        if x < 0:
            return 0.0
        if x == 0:
            e = self.nu * self.K - 1.0
            if e > 0:
                return 0.0
            if e < 0:
                return math.inf
            self._plan_tables(1)
            return math.exp(self.log_pref + float(self._logc[0]))
        base = self.log_pref + (self.nu * self.K - 1.0) * math.log(x) - x
        target = self._start_target(x, rel_tol) if r_max is None else base + DEFAULT_TARGET
        for _ in range(6):
            R, bits, lmax = self.plan(x, target, r_max)
            self._ensure(R, bits)
            with _workprec(bits):
                xa = arb(x)
                acc = arb(0)
                for r in range(R, -1, -1):
                    c = self._coef[r]
                    acc = acc * xa + (c if r % 2 == 0 else -c)
                nxt = self._coef[R + 1] * xa ** (R + 1)
                last = self._coef[R] * xa ** R
                positive = bool(acc.mid() > 0)
                # work with ratios to the sum so deep tails do not underflow
                log_sum = float(acc.mid().log()) if positive else -math.inf
                rel_tail = float(abs(nxt.mid()) / acc.mid()) if positive else math.inf
                rel_rad = float(acc.rad() / acc.mid()) if positive else math.inf
                decreasing = bool(nxt.mid() <= last.mid())
            log_f = base + log_sum
            f = math.exp(log_f) if positive else 0.0
            self.last_info = {"x": x, "R": R, "bits": bits, "log_max_term": lmax,
                              "tail_bound": rel_tail * f, "radius": rel_rad * f, "value": f,
                              "log_value": log_f}
            if positive and decreasing and rel_tail <= rel_tol and rel_rad <= 1e-3 * rel_tol:
                return f
            if r_max is not None:
                raise ConvergenceError(
                    f"series not converged at r_max={r_max}: first omitted term is "
                    f"{rel_tail:.3g} of the sum; increase r_max or use automatic truncation",
                    diagnostics=dict(self.last_info))
            est = log_f if positive else min(self._log_f_guess(x), lmax) - 50.0
            target = min(target, est + math.log(rel_tol) - 2 * math.log(10.0))
        raise ConvergenceError("series evaluation did not converge", diagnostics=dict(self.last_info))


# absolute error goal for f_S when truncating automatically
DEFAULT_TARGET = -40.0 * math.log(10.0)
