"""Monte Carlo experiments: power curves, the order-statistic null, and the
Gaussian-mean and latent-categorical simulation studies.

Every replicate draws from streams keyed by ``mix(base_seed, ...)`` so the
output does not depend on the number of worker threads; results are
aggregated in replicate order.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from ._rng import ROLE_BOOT, ROLE_DATA, ROLE_NULL, generator, mix
from .core import CompositionRule, GroupSample, ParamLayout, make_rule
from .errors import InvalidArgumentError
from .estimation import DeltaEstimate, bootstrap_cov, delta_mcle, known_cov
from .models import GaussianMeanModel, LatentCategoricalModel, simulate_gaussian, simulate_latent
from .nulldist import (OrderedGammaDensity, fscl_null_cdf, fscl_null_density, null_normalization,
                       permutation_null, p_value, simulate_null)
from .selection import select_ncl
from .testing import forward_search, lssb_stat, lssbw_stat, wald_stat

__all__ = [
    "SCHEMA_VERSION",
    "EXPERIMENTS",
    "ExperimentConfig",
    "ExperimentReport",
    "preset",
    "run",
    "run_example1",
    "run_example2",
    "run_example3",
    "run_figure1",
    "run_figure2",
    "two_sample_statistics",
    "proportion_row",
    "example1_delta",
    "example1_cov",
]

SCHEMA_VERSION = 1
EXPERIMENTS = ("fig1", "fig2", "ex1", "ex2", "ex3")
ROW_FIELDS = ("experiment", "setting", "ncl_star", "method", "hypothesis", "reps",
              "estimate", "se", "ci_low", "ci_high")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    reps: int
    n0: int = 100
    n1: int = 100
    alpha: float = 0.05
    B_boot: int = 200
    B_perm: int = 200
    base_seed: int = 20240101
    scale_preset: str = "desk"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise InvalidArgumentError(f"unknown experiment {self.experiment!r}")
        if int(self.reps) < 1:
            raise InvalidArgumentError("reps must be >= 1")
        if not 0.0 < float(self.alpha) < 1.0:
            raise InvalidArgumentError("alpha must lie in (0, 1)")
        if self.scale_preset not in ("desk", "paper"):
            raise InvalidArgumentError("scale_preset must be 'desk' or 'paper'")
        if min(int(self.n0), int(self.n1)) < 2 or min(int(self.B_boot), int(self.B_perm)) < 2:
            raise InvalidArgumentError("group sizes and resample counts must be >= 2")

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        params = dict(d.pop("params"))
        params.update(kw.pop("params", {}))
        d.update(kw)
        return ExperimentConfig(params=params, **d)


_PRESETS = {
    "fig1": dict(reps=10_000, n0=18, n1=18, params={
        "d": 20, "sigma2": 9.0, "delta0": [0.5 * i for i in range(9)],
        "ncl_star": [1, 5, 10, 20], "null_draws": 1_000_000}),
    "fig2": dict(reps=100_000, params={
        "K": 5, "p_prime": 5.0, "k": [1, 2, 5], "t_max": 40.0, "t_step": 0.25,
        "hist_k": 1, "hist_width": 1.0}),
    "ex1": dict(reps=10_000, n0=50, n1=50, params={
        "m": [1, 2, 3, 4], "ncl_star": "informative", "null_draws": 1_000_000,
        "delta_scale": 1.0}),
    "ex2": dict(reps=200, params={"d": 6, "C": 3, "eps": [0.0, 0.3, 0.4, 0.5]}),
    "ex3": dict(reps=200, n0=60, n1=60, params={
        "d": list(range(6, 21)), "C": 3, "effect": 0.8, "ncl_star": 1}),
}
_PAPER_OVERRIDES = {
    "ex2": dict(reps=1000, B_boot=1000, B_perm=1000),
    "ex3": dict(B_boot=1000, B_perm=1000),
}


def preset(experiment: str, scale: str = "desk", **overrides) -> ExperimentConfig:
    """Default configuration for an experiment at desk or paper scale."""
    if experiment not in _PRESETS:
        raise InvalidArgumentError(f"unknown experiment {experiment!r}")
    base = dict(_PRESETS[experiment])
    base["params"] = dict(base["params"])
    if scale == "paper":
        base.update(_PAPER_OVERRIDES.get(experiment, {}))
    base.update({k: v for k, v in overrides.items() if k != "params"})
    base["params"].update(overrides.get("params", {}))
    return ExperimentConfig(experiment, scale_preset=scale, **base)


@dataclass(eq=False)
class ExperimentReport:
    """Long-format rejection-rate rows plus auxiliary tables.

    ``runtime_s`` is kept out of the serialized forms so fixed-seed output is
    byte-identical across runs and thread counts.
    """

    config: ExperimentConfig
    rows: list[dict]
    tables: dict[str, list[dict]] = field(default_factory=dict)
    runtime_s: float = 0.0

    def row(self, method: str, setting: str | None = None, ncl_star=None, hypothesis=None) -> dict:
        hits = [r for r in self.rows if r["method"] == method
                and (setting is None or r["setting"] == setting)
                and (ncl_star is None or r["ncl_star"] == ncl_star)
                and (hypothesis is None or r["hypothesis"] == hypothesis)]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {method}, {setting}, {ncl_star}, {hypothesis}")
        return hits[0]

    def estimate(self, *args, **kw) -> float:
        return self.row(*args, **kw)["estimate"]

    def to_json(self) -> str:
        from . import __version__

        doc = {"schema_version": SCHEMA_VERSION, "version": __version__,
               "config": self.config.to_dict(), "config_hash": self.config.config_hash(),
               "seed": self.config.base_seed, "rows": self.rows, "tables": self.tables}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv(self, table: str | None = None) -> str:
        rows = self.rows if table is None else self.tables[table]
        fields = list(ROW_FIELDS) if table is None else list(rows[0].keys()) if rows else []
        return _csv_text(rows, fields, self.config)

    def write(self, out_dir) -> list[Path]:
        """Write ``<exp>.csv``, ``<exp>_<table>.csv`` and ``<exp>.json``; returns the paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        name = self.config.experiment
        paths = [out / f"{name}.csv"]
        paths[0].write_text(self.to_csv(), encoding="utf-8")
        for t in sorted(self.tables):
            p = out / f"{name}_{t}.csv"
            p.write_text(self.to_csv(t), encoding="utf-8")
            paths.append(p)
        p = out / f"{name}.json"
        p.write_text(self.to_json(), encoding="utf-8")
        paths.append(p)
        return paths


def _fmt(v):
    if isinstance(v, float):
        return repr(round(v, 12)) if math.isfinite(v) else repr(v)
    return "" if v is None else str(v)


def _csv_text(rows: list[dict], fields: list[str], config: ExperimentConfig) -> str:
    from . import __version__

    buf = io.StringIO()
    buf.write(f"# schema_version={SCHEMA_VERSION}\n# version={__version__}\n"
              f"# seed={config.base_seed}\n# config_hash={config.config_hash()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r.get(f)) for f in fields])
    return buf.getvalue()


def proportion_row(experiment: str, setting: str, ncl_star, method: str, hypothesis: str,
                   hits: Sequence[bool]) -> dict:
    """Rejection rate with ``SE = sqrt(p(1-p)/reps)`` and a normal 95 % interval clipped to [0, 1]."""
    x = np.asarray(hits, dtype=bool)
    reps = int(x.size)
    p = float(x.mean())
    se = math.sqrt(p * (1.0 - p) / reps)
    return {"experiment": experiment, "setting": setting, "ncl_star": ncl_star, "method": method,
            "hypothesis": hypothesis, "reps": reps, "estimate": p, "se": se,
            "ci_low": max(0.0, p - 1.96 * se), "ci_high": min(1.0, p + 1.96 * se)}


def _map_ordered(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=int(threads)) as ex:
        return list(ex.map(fn, items))


def _threshold(K: int, k: int, p_prime: float, alpha: float, n_draws: int, seed: int) -> float:
    draws = simulate_null(OrderedGammaDensity(K, k, p_prime), n_draws, mix(seed, ROLE_NULL, K, k))
    return float(np.quantile(draws, 1.0 - alpha))


def _scaled_delta(z: np.ndarray, layout: ParamLayout, n0: int, n1: int) -> DeltaEstimate:
    full = CompositionRule.full(layout.n_sub)
    return DeltaEstimate(np.asarray(z) / math.sqrt(n0 + n1), full, layout.coords(full),
                         layout.block_offsets(full), n0, n1)


# --------------------------------------------------------------------------
# Figure 1: power against the size of a single shifted mean
# --------------------------------------------------------------------------


def run_figure1(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Power of FS-CL at several step counts when one of ``d`` means is shifted by ``delta0``.

    The covariance of ``sqrt(n) delta_hat`` is the known ``n sigma2 (1/n0 + 1/n1) I``;
    thresholds are upper-alpha quantiles of simulated top-k chi-square(1) sums.
    """
    t0 = time.perf_counter()
    p = cfg.params
    d, grid, steps = int(p["d"]), [float(x) for x in p["delta0"]], [int(s) for s in p["ncl_star"]]
    if not grid:
        raise InvalidArgumentError("delta0 grid is empty")
    if not all(1 <= s <= d for s in steps):
        raise InvalidArgumentError(f"step counts must lie in [1, {d}]")
    model = GaussianMeanModel(d, p["sigma2"])
    cov = known_cov(model.known_cov(cfg.n0, cfg.n1), CompositionRule.full(d), model.layout)
    crit = {s: _threshold(d, s, 1.0, cfg.alpha, int(p["null_draws"]), cfg.base_seed) for s in steps}
    n_max = max(steps)

    def one(job):
        gi, rep = job
        mean1 = np.zeros(d)
        mean1[0] = grid[gi]
        s0 = simulate_gaussian(np.zeros(d), model.sigma2, cfg.n0, mix(cfg.base_seed, ROLE_DATA, gi, rep, 0), 0)
        s1 = simulate_gaussian(mean1, model.sigma2, cfg.n1, mix(cfg.base_seed, ROLE_DATA, gi, rep, 1), 1)
        traj = forward_search(delta_mcle(model, s0, s1), cov, model.layout, n_max)
        return [traj.steps[s - 1].statistic > crit[s] for s in steps]

    jobs = [(gi, r) for gi in range(len(grid)) for r in range(cfg.reps)]
    res = np.array(_map_ordered(one, jobs, threads), dtype=bool).reshape(len(grid), cfg.reps, len(steps))
    rows = []
    for gi, d0 in enumerate(grid):
        for si, s in enumerate(steps):
            method = "Wald" if s == d else "FS-CL"
            rows.append(proportion_row("fig1", f"delta0={d0:g}", s, method,
                                       "H0" if d0 == 0 else "H1", res[gi, :, si]))
    tables = {"thresholds": [{"ncl_star": s, "threshold": crit[s]} for s in steps]}
    return ExperimentReport(cfg, rows, tables, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# Figure 2: the order-statistic null density
# --------------------------------------------------------------------------


def run_figure2(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Analytic top-k densities on a grid and a Monte Carlo histogram for one ``k``."""
    t0 = time.perf_counter()
    p = cfg.params
    K, pp = int(p["K"]), float(p["p_prime"])
    ks = [int(k) for k in p["k"]]
    step = float(p["t_step"])
    grid = np.round(np.arange(0.0, float(p["t_max"]) + 0.5 * step, step), 12)
    grid = grid[grid > 0]

    def dens(k):
        c = OrderedGammaDensity(K, k, pp)
        c.prepare(float(grid[-1]))
        return fscl_null_density(grid, c), null_normalization(c)

    out = _map_ordered(dens, ks, threads)
    density_rows = [{"t": float(t), **{f"k={k}": float(out[i][0][j]) for i, k in enumerate(ks)}}
                    for j, t in enumerate(grid)]
    norm_rows = [{"k": k, "K": K, "p_prime": pp, "normalization": out[i][1]} for i, k in enumerate(ks)]

    hk = int(p["hist_k"])
    cfg_h = OrderedGammaDensity(K, hk, pp)
    draws = simulate_null(cfg_h, cfg.reps, mix(cfg.base_seed, ROLE_NULL, K, hk))
    width = float(p["hist_width"])
    edges = np.arange(0.0, float(p["t_max"]) + width, width)
    counts, _ = np.histogram(draws, bins=edges)
    hist_rows = [{"t_low": float(a), "t_high": float(b), "count": int(c),
                  "density": float(c) / (draws.size * width)} for a, b, c in zip(edges[:-1], edges[1:], counts)]
    # KS distance on a fine grid; between grid points both CDFs are monotone
    fine = np.round(np.arange(0.0, max(float(draws.max()), float(p["t_max"])) + 0.05, 0.05), 12)
    F = fscl_null_cdf(fine, cfg_h)
    srt = np.sort(draws)
    hi = np.searchsorted(srt, fine, side="right") / srt.size
    lo = np.searchsorted(srt, fine, side="left") / srt.size
    ks_dist = float(max(np.max(np.abs(hi - F)), np.max(np.abs(lo - F))))
    rows = [{"experiment": "fig2", "setting": f"K={K},p'={pp:g}", "ncl_star": k, "method": "analytic",
             "hypothesis": "H0", "reps": 0, "estimate": out[i][1], "se": 0.0, "ci_low": None,
             "ci_high": None} for i, k in enumerate(ks)]
    tables = {"density": density_rows, "normalization": norm_rows, "histogram": hist_rows,
              "ks": [{"k": hk, "draws": int(draws.size), "ks_distance": ks_dist}]}
    return ExperimentReport(cfg, rows, tables, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# Example 1: normal MCLEs with known covariance
# --------------------------------------------------------------------------

EX1_BLOCK = np.array([[1.5, 0.2], [0.2, 1.0]])


def example1_delta(m: int, n_sub: int = 20) -> np.ndarray:
    """``delta_j = (-1)^j 0.5 (m+1) I(j <= 6-m)`` for ``j = 1..2 n_sub``."""
    j = np.arange(1, 2 * n_sub + 1)
    return np.where(j <= 6 - m, (-1.0) ** j * 0.5 * (m + 1), 0.0)


def example1_cov(n_sub: int = 20) -> np.ndarray:
    return np.kron(np.eye(n_sub), EX1_BLOCK)


def _informative_rule(delta: np.ndarray, layout: ParamLayout) -> CompositionRule:
    ks = [k for k in range(layout.n_sub) if np.any(delta[list(layout.shared_map[k])] != 0)]
    return make_rule(ks, layout.n_sub)


def run_example1(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Type I error and power with ``sqrt(n) delta_hat ~ N_40(delta, V)`` drawn directly.

    Every statistic uses the known ``V``; FS-CL thresholds come from the
    simulated top-k chi-square(2) null.  ``ncl_star="informative"`` sets the
    step count to the number of shifted blocks for each ``m``.  ``delta_scale``
    multiplies the mean shift (1 reproduces the stated setup).
    """
    t0 = time.perf_counter()
    p = cfg.params
    n_sub = 20
    layout = ParamLayout.uniform(n_sub, 2)
    V = example1_cov(n_sub)
    L = np.linalg.cholesky(V)
    cov = known_cov(V, CompositionRule.full(n_sub), layout)
    ms = [int(m) for m in p["m"]]
    if not all(1 <= m <= 4 for m in ms):
        raise InvalidArgumentError("m must lie in {1, 2, 3, 4}")
    rows, ham = [], []
    crit_cache: dict[int, float] = {}
    for m in ms:
        dtrue = float(p.get("delta_scale", 1.0)) * example1_delta(m, n_sub)
        w_true = _informative_rule(dtrue, layout)
        s = w_true.size if p["ncl_star"] == "informative" else int(p["ncl_star"])
        if s not in crit_cache:
            crit_cache[s] = _threshold(n_sub, s, 2.0, cfg.alpha, int(p["null_draws"]), cfg.base_seed)
        crit = crit_cache[s]

        def one(job, m=m, dtrue=dtrue, s=s, crit=crit, w_true=w_true):
            h, rep = job
            rng = generator(mix(cfg.base_seed, ROLE_DATA, m, h, rep))
            z = (dtrue if h else 0.0) + L @ rng.standard_normal(2 * n_sub)
            delta = _scaled_delta(z, layout, cfg.n0, cfg.n1)
            traj = forward_search(delta, cov, layout, s)
            fs = traj.steps[-1].statistic > crit
            wd = wald_stat(delta, cov, cfg.alpha).p_value <= cfg.alpha
            lb = lssb_stat(delta, cov, cfg.alpha).p_value <= cfg.alpha
            lw = lssbw_stat(delta, cov, cfg.alpha).p_value <= cfg.alpha
            hd = float(np.sum(traj.final_rule.as_array() != w_true.as_array()))
            return fs, wd, lb, lw, hd

        jobs = [(h, r) for h in (0, 1) for r in range(cfg.reps)]
        res = _map_ordered(one, jobs, threads)
        for h in (0, 1):
            part = res[h * cfg.reps:(h + 1) * cfg.reps]
            for i, meth in enumerate(("FS-CL", "Wald", "LSSB", "LSSBw")):
                rows.append(proportion_row("ex1", f"m={m}", s if meth == "FS-CL" else None, meth,
                                           "H1" if h else "H0", [r[i] for r in part]))
        hd = np.array([r[4] for r in res[cfg.reps:]])
        ham.append({"m": m, "ncl_star": s, "mean_hamming": float(hd.mean()),
                    "per_coordinate": float(hd.mean() / n_sub), "exact_recovery": float(np.mean(hd == 0))})
    tables = {"hamming": ham,
              "thresholds": [{"ncl_star": s, "threshold": c} for s, c in sorted(crit_cache.items())]}
    return ExperimentReport(cfg, rows, tables, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# Examples 2 and 3: latent categorical data, permutation nulls
# --------------------------------------------------------------------------


def two_sample_statistics(model, s0: GroupSample, s1: GroupSample, steps: Sequence[int], B: int,
                          seed: int, full: bool = False):
    """FS-CL statistics after each of ``steps``, Wald, LSSB and LSSBw on one dataset.

    One bootstrap covariance under the full rule is shared by every
    statistic.  With ``full=True`` also returns the search trajectory.
    """
    delta = delta_mcle(model, s0, s1)
    cov = bootstrap_cov(model, s0, s1, None, B, seed)
    traj = forward_search(delta, cov, model.layout, max(steps))
    out = {f"FSCL{t}": float(traj.steps[t - 1].statistic) for t in steps}
    out["Wald"] = wald_stat(delta, cov).statistic
    out["LSSB"] = lssb_stat(delta, cov).statistic
    out["LSSBw"] = lssbw_stat(delta, cov).statistic
    if full:
        return out, traj
    return out


def _latent_rep(model: LatentCategoricalModel, g0: np.ndarray, g1: np.ndarray, cfg: ExperimentConfig,
                steps: Sequence[int], key: tuple, with_bic: bool):
    seed = mix(cfg.base_seed, *key)
    s0 = simulate_latent(model, g0, cfg.n0, mix(seed, ROLE_DATA, 0), 0)
    s1 = simulate_latent(model, g1, cfg.n1, mix(seed, ROLE_DATA, 1), 1)
    obs, traj = two_sample_statistics(model, s0, s1, steps, cfg.B_boot, mix(seed, ROLE_BOOT), full=True)

    def builder(p0, p1, sd):
        return two_sample_statistics(model, p0, p1, steps, cfg.B_boot, sd)

    nulls = permutation_null(model, s0, s1, builder, cfg.B_perm, seed)
    pv = {k: p_value(v, nulls[k]) for k, v in obs.items()}
    bic = None
    if with_bic:
        full_traj = traj if len(traj.steps) == model.n_sub else None
        path = select_ncl(model, s0, s1, B=cfg.B_boot, seed=mix(seed, ROLE_BOOT), trajectory=full_traj)
        bic = (path.values, path.map_choice)
    return pv, bic


def _gamma0(d: int, C: int) -> np.ndarray:
    if C != 3:
        raise InvalidArgumentError("the bundled latent setups use C = 3")
    return np.tile([-0.3, 0.3], (d, 1))


def run_example2(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Six latent categorical variables; the first variable's thresholds move by ``(-eps, eps)``."""
    t0 = time.perf_counter()
    p = cfg.params
    d, C = int(p["d"]), int(p["C"])
    model = LatentCategoricalModel(d, C)
    g0 = _gamma0(d, C)
    steps = list(range(1, d + 1))
    rows, bic_rows = [], []
    for ei, eps in enumerate(float(e) for e in p["eps"]):
        g1 = g0.copy()
        g1[0] += [-eps, eps]
        res = _map_ordered(lambda r: _latent_rep(model, g0, g1, cfg, steps, (ei, r), True),
                           list(range(cfg.reps)), threads)
        hyp = "H0" if eps == 0 else "H1"
        for t in steps:
            rows.append(proportion_row("ex2", f"eps={eps:g}", t, "FS-CL", hyp,
                                       [r[0][f"FSCL{t}"] <= cfg.alpha for r in res]))
        for meth in ("Wald", "LSSB", "LSSBw"):
            rows.append(proportion_row("ex2", f"eps={eps:g}", None, meth, hyp,
                                       [r[0][meth] <= cfg.alpha for r in res]))
        vals = np.array([r[1][0] for r in res])
        maps = np.array([r[1][1] for r in res])
        for t in steps:
            bic_rows.append({"setting": f"eps={eps:g}", "ncl_star": t,
                             "mean_cl_bic": float(vals[:, t - 1].mean()),
                             "se": float(vals[:, t - 1].std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0,
                             "map_fraction": float(np.mean(maps == t))})
    return ExperimentReport(cfg, rows, {"cl_bic": bic_rows}, time.perf_counter() - t0)


def run_example3(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Power as the number of candidate variables grows; only the first variable carries a shift."""
    t0 = time.perf_counter()
    p = cfg.params
    ds = [int(x) for x in p["d"]]
    if not all(6 <= x <= 20 for x in ds):
        raise InvalidArgumentError("candidate counts must lie in [6, 20]")
    C, eff, s = int(p["C"]), float(p["effect"]), int(p["ncl_star"])
    rows = []
    for d in ds:
        model = LatentCategoricalModel(d, C)
        g0 = _gamma0(d, C)
        g1 = g0.copy()
        g1[0] += [-eff, eff]
        res = _map_ordered(lambda r: _latent_rep(model, g0, g1, cfg, [s], (d, r), False),
                           list(range(cfg.reps)), threads)
        rows.append(proportion_row("ex3", f"d={d}", s, "FS-CL", "H1",
                                   [r[0][f"FSCL{s}"] <= cfg.alpha for r in res]))
        for meth in ("Wald", "LSSB", "LSSBw"):
            rows.append(proportion_row("ex3", f"d={d}", None, meth, "H1",
                                       [r[0][meth] <= cfg.alpha for r in res]))
    return ExperimentReport(cfg, rows, {}, time.perf_counter() - t0)


_RUNNERS = {"fig1": run_figure1, "fig2": run_figure2, "ex1": run_example1,
            "ex2": run_example2, "ex3": run_example3}


def run(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    return _RUNNERS[cfg.experiment](cfg, threads)
