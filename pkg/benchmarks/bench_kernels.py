"""Moment-accumulation timing: numba kernel vs the numpy fallback.

    python3 benchmarks/bench_kernels.py [--t 10000] [--n 30] [--orders 3,4,5] [--repeat 3]

Both backends fill the same canonical moment vector; the script checks they
agree before reporting times. The first numba call (compilation, or loading
the on-disk cache) is timed separately and excluded from the per-run figure.
"""
import argparse
import time

import numpy as np

from homcsel import _kernels
from homcsel.symtensor import canonical_rank, canonical_table, n_canonical


def layout(n, k):
    prefixes = np.ascontiguousarray(canonical_table(n, k - 1), dtype=np.int64)
    heads = np.column_stack([prefixes, prefixes[:, -1]])
    offsets = np.ascontiguousarray(canonical_rank(heads, n))
    return prefixes, offsets


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--t", type=int, default=10_000)
    ap.add_argument("--n", type=int, default=30)
    ap.add_argument("--orders", default="3,4,5")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    x = rng.standard_normal((args.t, args.n))
    xt = np.ascontiguousarray((x - x.mean(axis=0)).T)
    print(f"t={args.t} n={args.n} numba available: {_kernels.HAVE_NUMBA}")
    print(f"{'order':>5} {'entries':>9} {'numpy s':>9} {'numba s':>9} {'speedup':>8} {'max |diff|':>11}")

    for k in (int(v) for v in args.orders.split(",")):
        prefixes, offsets = layout(args.n, k)
        size = n_canonical(args.n, k)
        ref = np.empty(size)
        t_np = best_of(lambda: _kernels.accumulate_numpy(xt, prefixes, offsets, ref), args.repeat)
        if _kernels.HAVE_NUMBA:
            got = np.empty(size)
            t0 = time.perf_counter()
            _kernels.accumulate_numba(xt, prefixes, offsets, got)
            warm = time.perf_counter() - t0
            t_nb = best_of(lambda: _kernels.accumulate_numba(xt, prefixes, offsets, got), args.repeat)
            diff = float(np.max(np.abs(got - ref)))
            print(f"{k:>5} {size:>9} {t_np:>9.3f} {t_nb:>9.3f} {t_np / t_nb:>7.2f}x {diff:>11.2e}"
                  f"   (first call {warm:.2f} s)")
        else:
            print(f"{k:>5} {size:>9} {t_np:>9.3f} {'-':>9} {'-':>8} {'-':>11}")


if __name__ == "__main__":
    main()
