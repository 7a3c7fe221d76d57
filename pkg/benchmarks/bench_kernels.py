"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5]

Shapes follow the bundled experiments: bootstrap threshold fits for six
3-label variables at n = 100, bootstrap means for d = 20 at n = 18, and the
full forward path for 20 blocks of 2.
"""

import argparse
import timeit

import numpy as np

from fscl import _kernels as K


def cases(rng):
    codes = np.ascontiguousarray(rng.integers(1, 4, size=(100, 6)), dtype=np.int64)
    rows = rng.integers(0, 100, size=(200, 100)).astype(np.int64)
    tab = K.quantile_table(100)
    data = rng.normal(size=(18, 20))
    rows_m = rng.integers(0, 18, size=(1000, 18)).astype(np.int64)
    A = rng.normal(size=(40, 40))
    V = A @ A.T + 40 * np.eye(40)
    delta = rng.normal(size=40)
    blocks = np.arange(40, dtype=np.int64).reshape(20, 2)
    return {
        "boot_quantiles (B=200, n=100, d=6)": (
            lambda: K.boot_quantiles_numba(codes, rows, 3, tab, 1e-6),
            lambda: K.boot_quantiles_numpy(codes, rows, 3, tab, 1e-6)),
        "boot_means (B=1000, n=18, d=20)": (
            lambda: K.boot_means_numba(data, rows_m),
            lambda: K.boot_means_numpy(data, rows_m)),
        "forward_path (N=20, p=2, full path)": (
            lambda: K.forward_path_numba(delta, V, 100.0, blocks, 20),
            lambda: K.forward_path_numpy(delta, V, 100.0, blocks, 20)),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not K.HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, (fast, slow) in cases(rng).items():
        fast()  # compile outside the timing
        res = []
        for f in (fast, slow):
            t = timeit.Timer(f)
            n, _ = t.autorange()
            res.append(min(t.repeat(args.repeat, n)) / n * 1e3)
        print(f"{name:40s} {res[0]:10.3f} {res[1]:10.3f} {res[1] / res[0]:8.1f}x")


if __name__ == "__main__":
    main()
