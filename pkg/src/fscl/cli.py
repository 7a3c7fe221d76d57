"""Command-line interface: simulation studies, case-control testing and the null density.

Exit codes: 0 success, 2 input error, 3 numerical failure.  Errors are
reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._rng import ROLE_BOOT, ROLE_DATA, mix
from .core import GroupSample
from .errors import DataFormatError, InvalidArgumentError, NumericDomainError
from .harness import EXPERIMENTS, ROW_FIELDS, SCHEMA_VERSION, preset, run, two_sample_statistics
from .models import LatentCategoricalModel, simulate_latent
from .nulldist import OrderedGammaDensity, fscl_null_density, null_normalization, permutation_null, p_value
from .selection import select_ncl

__all__ = ["CaseControlDataset", "ingest_csv", "write_csv", "dataset_text", "make_dataset", "cmd_test",
           "cmd_nulldensity",
           "export_schema", "main"]

CASE_LABELS = {"case": 1, "1": 1, "control": 0, "0": 0}
METHODS = ("FSCL", "Wald", "LSSB", "LSSBw")


@dataclass(frozen=True, eq=False)
class CaseControlDataset:
    """Genotype-style table: ``codes[i, j]`` in ``0..C-1`` and ``groups[i]`` 1 for cases."""

    variables: tuple[str, ...]
    groups: np.ndarray
    codes: np.ndarray
    C: int

    def __post_init__(self):
        g = np.array(self.groups, dtype=np.int8)
        c = np.array(self.codes, dtype=np.int64).reshape(g.size, -1)
        if c.shape[1] != len(self.variables):
            raise InvalidArgumentError("code matrix does not match the variable list")
        if int(self.C) < 2:
            raise InvalidArgumentError("need at least 2 categories")
        if c.size and (c.min() < 0 or c.max() >= self.C):
            raise InvalidArgumentError(f"codes must lie in 0..{self.C - 1}")
        for lab, name in ((0, "control"), (1, "case")):
            if np.sum(g == lab) < 2:
                raise InvalidArgumentError(f"need at least 2 {name} subjects, got {int(np.sum(g == lab))}")
        g.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "groups", g)
        object.__setattr__(self, "codes", c)
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "C", int(self.C))

    @property
    def d(self) -> int:
        return len(self.variables)

    def samples(self) -> tuple[GroupSample, GroupSample]:
        """(controls, cases) with labels shifted to ``1..C``."""
        lab = (self.codes + 1).astype(np.int8)
        return GroupSample(lab[self.groups == 0], 0), GroupSample(lab[self.groups == 1], 1)

    def equals(self, other: "CaseControlDataset") -> bool:
        return (self.variables == other.variables and self.C == other.C
                and np.array_equal(self.groups, other.groups) and np.array_equal(self.codes, other.codes))


def ingest_csv(path, group_column: str = "group", categories: int | None = None) -> CaseControlDataset:
    """Read a comma-separated file with a header row.

    The group column holds ``case``/``control`` or ``1``/``0``; every other
    column is a categorical code ``0..C-1``.  ``C`` is inferred as the
    largest observed code plus one unless ``categories`` forces it.
    """
    p = Path(path)
    if not p.is_file():
        raise InvalidArgumentError(f"no such file: {p}")
    with p.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataFormatError("missing header row", row=1)
        header = [h.strip() for h in header]
        if group_column not in header:
            raise DataFormatError(f"group column {group_column!r} not found", row=1, column=group_column)
        gi = header.index(group_column)
        names = [h for i, h in enumerate(header) if i != gi]
        if not names:
            raise DataFormatError("no variable columns", row=1)
        if len(set(names)) != len(names):
            raise DataFormatError("duplicate column names", row=1)
        groups, codes = [], []
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not x.strip() for x in rec):
                continue
            if len(rec) != len(header):
                raise DataFormatError(f"expected {len(header)} fields, found {len(rec)}", row=line)
            lab = rec[gi].strip().lower()
            if lab == "":
                raise DataFormatError("missing group label", row=line, column=group_column)
            if lab not in CASE_LABELS:
                raise DataFormatError(f"unknown group label {rec[gi]!r}", row=line, column=group_column)
            groups.append(CASE_LABELS[lab])
            row = []
            for i, v in enumerate(rec):
                if i == gi:
                    continue
                v = v.strip()
                if v == "":
                    raise DataFormatError(f"missing value in row {line}, column {header[i]!r}",
                                          row=line, column=header[i])
                try:
                    c = int(v)
                except ValueError:
                    raise DataFormatError(f"non-integer code {v!r}", row=line, column=header[i]) from None
                if c < 0:
                    raise DataFormatError(f"negative code {c}", row=line, column=header[i])
                row.append(c)
            codes.append(row)
    if not groups:
        raise InvalidArgumentError("file has no data rows")
    g = np.array(groups)
    if np.unique(g).size < 2:
        raise InvalidArgumentError("file contains a single group; need cases and controls")
    arr = np.array(codes, dtype=np.int64)
    C = int(arr.max()) + 1
    if categories is not None:
        if int(categories) < C:
            raise InvalidArgumentError(f"--categories {categories} is below the observed code count {C}")
        C = int(categories)
    return CaseControlDataset(tuple(names), g, arr, max(C, 2))


def dataset_text(ds: CaseControlDataset, group_column: str = "group") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([group_column, *ds.variables])
    for g, row in zip(ds.groups, ds.codes):
        w.writerow(["case" if g == 1 else "control", *map(int, row)])
    return buf.getvalue()


def write_csv(ds: CaseControlDataset, path, group_column: str = "group") -> None:
    Path(path).write_text(dataset_text(ds, group_column), encoding="utf-8")


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def cmd_test(ds: CaseControlDataset, n_cl_star="auto", alpha: float = 0.05, B_boot: int = 1000,
             B_perm: int = 1000, seed: int = 0, methods=METHODS, threads: int = 1) -> dict:
    """Permutation-calibrated tests on one dataset.

    ``n_cl_star="auto"`` evaluates every path length, reports CL-BIC and the
    permutation p-value per length and marks the MAP choice.
    """
    methods = tuple(methods)
    bad = set(methods) - set(METHODS)
    if bad:
        raise InvalidArgumentError(f"unknown methods {sorted(bad)}")
    if not 0 < alpha < 1:
        raise InvalidArgumentError("alpha must lie in (0, 1)")
    model = LatentCategoricalModel(ds.d, ds.C)
    s0, s1 = ds.samples()
    auto = n_cl_star == "auto"
    if auto:
        steps = list(range(1, ds.d + 1))
    else:
        s = int(n_cl_star)
        if not 1 <= s <= ds.d:
            raise InvalidArgumentError(f"N_cl* must lie in [1, {ds.d}], got {s}")
        steps = [s]
    obs, traj = two_sample_statistics(model, s0, s1, steps, B_boot, mix(seed, ROLE_BOOT), full=True)

    def builder(p0, p1, sd):
        return two_sample_statistics(model, p0, p1, steps, B_boot, sd)

    nulls = permutation_null(model, s0, s1, builder, B_perm, seed, workers=threads)
    pv = {k: p_value(v, nulls[k]) for k, v in obs.items()}

    def names(t):
        return [ds.variables[i] for i in traj.chosen[:t]]

    config = {"n_cl_star": n_cl_star if auto else int(n_cl_star), "alpha": alpha, "B_boot": B_boot,
              "B_perm": B_perm, "seed": seed, "methods": list(methods)}
    report = {"command": "test", "config": config, "config_hash": _hash(config),
              "dataset": {"variables": list(ds.variables), "C": ds.C, "n_controls": s0.n,
                          "n_cases": s1.n}, "results": []}
    map_t = None
    if auto:
        path = select_ncl(model, s0, s1, B=B_boot, seed=mix(seed, ROLE_BOOT), trajectory=traj)
        map_t = path.map_choice
        report["cl_bic"] = [{"ncl_star": e.t, "cl_bic": e.cl_bic, "posterior": e.posterior,
                             "dof": e.dof, "p_value": pv[f"FSCL{e.t}"], "selected": names(e.t)}
                            for e in path.entries]
        report["map_ncl_star"] = map_t
    for m in methods:
        if m == "FSCL":
            t = map_t if auto else steps[0]
            stat, p = obs[f"FSCL{t}"], pv[f"FSCL{t}"]
            extra = {"ncl_star": t, "selected": names(t)}
        else:
            stat, p = obs[m], pv[m]
            extra = {}
        report["results"].append({"method": m, "statistic": stat, "p_value": p,
                                  "reject": bool(p <= alpha), "null_source": "permutation", **extra})
    return report


def parse_grid(spec: str) -> np.ndarray:
    """``start:stop:step`` (inclusive stop) or a comma-separated list."""
    try:
        if ":" in spec:
            a, b, h = (float(x) for x in spec.split(":"))
            if h <= 0 or b < a:
                raise ValueError
            n = int(math.floor((b - a) / h + 1e-9)) + 1
            return np.round(a + h * np.arange(n), 12)
        return np.array([float(x) for x in spec.split(",") if x.strip()])
    except ValueError:
        raise InvalidArgumentError(f"cannot parse t grid {spec!r}") from None


def cmd_nulldensity(k: int, K: int, p_prime: float, t_grid) -> str:
    """CSV of ``(t, density)`` with metadata lines, including the normalization integral."""
    from . import __version__

    cfg = OrderedGammaDensity(K, k, p_prime)
    t = np.asarray(t_grid, dtype=float)
    if t.size == 0 or np.any(t < 0) or not np.all(np.isfinite(t)):
        raise InvalidArgumentError("t grid must be non-empty, finite and non-negative")
    cfg.prepare(float(t.max()))
    f = np.atleast_1d(fscl_null_density(t, cfg))
    norm = null_normalization(cfg)
    buf = io.StringIO()
    buf.write(f"# schema_version={SCHEMA_VERSION}\n# version={__version__}\n"
              f"# k={k}\n# K={K}\n# p_prime={p_prime:g}\n# normalization={norm!r}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "density"])
    for a, b in zip(t, f):
        w.writerow([repr(float(a)), repr(float(b))])
    return buf.getvalue()


def export_schema() -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "simulate": {
            "main_csv": list(ROW_FIELDS),
            "tables": {
                "fig1": {"thresholds": ["ncl_star", "threshold"]},
                "fig2": {"density": ["t", "k=<k>..."], "normalization": ["k", "K", "p_prime", "normalization"],
                         "histogram": ["t_low", "t_high", "count", "density"],
                         "ks": ["k", "draws", "ks_distance"]},
                "ex1": {"hamming": ["m", "ncl_star", "mean_hamming", "per_coordinate", "exact_recovery"],
                        "thresholds": ["ncl_star", "threshold"]},
                "ex2": {"cl_bic": ["setting", "ncl_star", "mean_cl_bic", "se", "map_fraction"]},
                "ex3": {},
            },
            "csv_header_lines": ["schema_version", "version", "seed", "config_hash"],
        },
        "null_density": {"columns": ["t", "density"],
                         "header_lines": ["schema_version", "version", "k", "K", "p_prime", "normalization"]},
        "test": {"keys": ["command", "config", "config_hash", "dataset", "results", "cl_bic", "map_ncl_star",
                          "version"],
                 "results": ["method", "statistic", "p_value", "reject", "null_source", "ncl_star", "selected"],
                 "cl_bic": ["ncl_star", "cl_bic", "posterior", "dof", "p_value", "selected"]},
        "dataset_csv": {"group_column": "group", "group_labels": ["case", "control", "1", "0"],
                        "codes": "integers 0..C-1, no missing values"},
    }


def make_dataset(d: int, n0: int, n1: int, eps: float, seed: int) -> CaseControlDataset:
    """Latent-threshold dataset: thresholds (-0.3, 0.3) everywhere, the first variable's shifted by (-eps, eps) in cases."""
    model = LatentCategoricalModel(d, 3)
    g0 = np.tile([-0.3, 0.3], (d, 1))
    g1 = g0.copy()
    g1[0] += [-eps, eps]
    s0 = simulate_latent(model, g0, n0, mix(seed, ROLE_DATA, 0), 0)
    s1 = simulate_latent(model, g1, n1, mix(seed, ROLE_DATA, 1), 1)
    codes = np.concatenate([s0.data, s1.data]).astype(np.int64) - 1
    groups = np.r_[np.zeros(n0, dtype=int), np.ones(n1, dtype=int)]
    return CaseControlDataset(tuple(f"V{j + 1}" for j in range(d)), groups, codes, 3)


# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidArgumentError(f"{self.prog}: {message}")


def _parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None, help="output file (test, null-density) or directory (simulate)")
    common.add_argument("--threads", type=int, default=1)

    ap = _Parser(prog="fscl", description=__doc__.splitlines()[0])
    from . import __version__

    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", parents=[common], help="run a simulation study")
    sim.add_argument("experiment", choices=EXPERIMENTS)
    sim.add_argument("--reps", type=int)
    sim.add_argument("--boot", type=int)
    sim.add_argument("--perm", type=int)
    sim.add_argument("--alpha", type=float)
    sim.add_argument("--ncl-star", default=None)
    sim.add_argument("--scale", choices=("desk", "paper"), default="desk")

    te = sub.add_parser("test", parents=[common], help="test a case-control CSV")
    te.add_argument("data")
    te.add_argument("--ncl-star", default="auto")
    te.add_argument("--alpha", type=float, default=0.05)
    te.add_argument("--boot", type=int, default=1000)
    te.add_argument("--perm", type=int, default=1000)
    te.add_argument("--categories", type=int, default=None)
    te.add_argument("--group-column", default="group")
    te.add_argument("--methods", default=",".join(METHODS))

    nd = sub.add_parser("null-density", parents=[common], help="tabulate the order-statistic null")
    nd.add_argument("--k", type=int, required=True)
    nd.add_argument("--K", type=int, required=True)
    nd.add_argument("--p-prime", type=float, required=True)
    nd.add_argument("--t-grid", default="0.5:40:0.5")

    sub.add_parser("export-schema", parents=[common], help="print output schemas as JSON")

    mk = sub.add_parser("make-dataset", parents=[common], help="write a synthetic case-control CSV")
    mk.add_argument("--d", type=int, default=6)
    mk.add_argument("--n0", type=int, default=100)
    mk.add_argument("--n1", type=int, default=100)
    mk.add_argument("--eps", type=float, default=0.0)
    return ap


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _simulate(a) -> None:
    kw = {}
    for flag, key in (("reps", "reps"), ("boot", "B_boot"), ("perm", "B_perm"), ("alpha", "alpha"),
                      ("seed", "base_seed")):
        v = getattr(a, flag)
        if v is not None:
            kw[key] = v
    if a.ncl_star is not None:
        if a.experiment not in ("ex1", "ex3", "fig1"):
            raise InvalidArgumentError(f"--ncl-star does not apply to {a.experiment}")
        try:
            vals = [int(x) for x in str(a.ncl_star).split(",")]
        except ValueError:
            raise InvalidArgumentError(f"bad --ncl-star {a.ncl_star!r}") from None
        kw["params"] = {"ncl_star": vals if a.experiment == "fig1" else vals[0]}
    cfg = preset(a.experiment, a.scale, **kw)
    rep = run(cfg, threads=a.threads)
    if a.out:
        for p in rep.write(a.out):
            print(p)
    else:
        sys.stdout.write(rep.to_csv())


def _run(argv) -> int:
    a = _parser().parse_args(argv)
    from . import __version__

    if a.threads < 1:
        raise InvalidArgumentError("--threads must be >= 1")
    if a.cmd == "simulate":
        _simulate(a)
    elif a.cmd == "test":
        ds = ingest_csv(a.data, a.group_column, a.categories)
        n = a.ncl_star if a.ncl_star == "auto" else int(a.ncl_star)
        rep = cmd_test(ds, n, a.alpha, a.boot, a.perm, 0 if a.seed is None else a.seed,
                       [m.strip() for m in a.methods.split(",") if m.strip()], a.threads)
        rep["version"] = __version__
        _emit(json.dumps(rep, indent=2, sort_keys=True) + "\n", a.out)
    elif a.cmd == "null-density":
        _emit(cmd_nulldensity(a.k, a.K, a.p_prime, parse_grid(a.t_grid)), a.out)
    elif a.cmd == "export-schema":
        _emit(json.dumps(export_schema(), indent=2, sort_keys=True) + "\n", a.out)
    elif a.cmd == "make-dataset":
        ds = make_dataset(a.d, a.n0, a.n1, a.eps, 0 if a.seed is None else a.seed)
        _emit(dataset_text(ds), a.out)
    return 0


def _error(kind: str, exc: Exception, code: int) -> int:
    doc = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    for attr in ("row", "column", "index"):
        v = getattr(exc, attr, None)
        if v is not None:
            doc[attr] = v
    diag = getattr(exc, "diagnostics", None)
    if diag:
        doc["diagnostics"] = {k: (v if isinstance(v, (int, float, str, bool)) or v is None else str(v))
                              for k, v in diag.items()}
    sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    try:
        return _run(sys.argv[1:] if argv is None else argv)
    except (InvalidArgumentError, FileNotFoundError) as exc:
        return _error("input", exc, 2)
    except (NumericDomainError, ArithmeticError) as exc:
        return _error("numeric", exc, 3)


if __name__ == "__main__":
    sys.exit(main())
