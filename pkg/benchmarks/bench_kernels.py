"""Compare the numba kernels with their numpy fallbacks.

Usage: ``python benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]``

For each kernel the first numba call (compilation) is excluded; the table
reports the best of ``repeat`` timings and the maximum relative difference
between the two backends.
"""

from __future__ import annotations

import argparse
import itertools
import time

import numpy as np

from hamclt import kernels, set_backend
from hamclt._backend import HAVE_NUMBA


def _cases(scale: float):
    rng = np.random.default_rng(0)
    n = int(200_000 * scale)
    freq = rng.standard_cauchy((n, 4))
    yield "simplex_fourier", lambda: kernels.simplex_fourier(freq, 1.0)

    v = rng.uniform(-1.5, 1.5, (int(100_000 * scale), 3))
    perms = np.array(list(itertools.permutations(range(3))), dtype=np.int64)
    yield "permutation_sum", lambda: kernels.permutation_sum(kernels.BALL, v, perms, (1.0, 8.0, 0.0))

    x = rng.standard_normal((int(2_000 * scale), 500))
    idx = np.sort(rng.integers(0, 500, (5_000, 3)), axis=1)
    coef = rng.standard_normal(5_000)
    yield "monomial_sum", lambda: kernels.monomial_sum(x, idx, coef)
    yield "hermite_sum", lambda: kernels.hermite_sum(x, idx, coef)


def _best(fn, repeat: int):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--scale", type=float, default=1.0)
    args = p.parse_args(argv)
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    print(f"{'kernel':<18}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'max rel diff':>15}")
    for name, fn in _cases(args.scale):
        set_backend("numba")
        fn()  # compile
        t_nb, a = _best(fn, args.repeat)
        set_backend("numpy")
        t_np, b = _best(fn, args.repeat)
        diff = float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))
        print(f"{name:<18}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>10.1f}{diff:>15.2e}")
    set_backend("numba")


if __name__ == "__main__":
    main()
