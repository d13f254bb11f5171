"""Benchmark the compiled ranking kernel against the pure-Python fallback.

Generates random query/gallery instances, times both backends on the same
inputs, verifies their outputs are identical, and prints the speedup.

    python3 benchmarks/bench_ranking.py [--queries 500] [--gallery 5000]
"""

import argparse
import sys
import time

import numpy as np

from posedistill.evaluation import available_backends


def bench(kernel, args_tuple, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = kernel(*args_tuple)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--queries", type=int, default=500)
    parser.add_argument("--gallery", type=int, default=5000)
    parser.add_argument("--ids", type=int, default=100)
    parser.add_argument("--cams", type=int, default=6)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernel not built (pip install -e . with cython present)")
        return 1

    rng = np.random.default_rng(args.seed)
    dist = rng.random((args.queries, args.gallery))
    q_ids = rng.integers(0, args.ids, args.queries)
    q_cams = rng.integers(0, args.cams, args.queries)
    g_ids = rng.integers(0, args.ids, args.gallery)
    g_cams = rng.integers(0, args.cams, args.gallery)
    inputs = (dist, q_ids, q_cams, g_ids, g_cams, 10)

    t_py, out_py = bench(backends["python"], inputs, args.repeats)
    t_cy, out_cy = bench(backends["cython"], inputs, args.repeats)

    for a, b, name in zip(out_py, out_cy, ("cmc", "ap", "valid_mask")):
        if not np.array_equal(a, b, equal_nan=True):
            print(f"MISMATCH between backends in {name}")
            return 1

    print(f"instance: {args.queries} queries x {args.gallery} gallery")
    print(f"python kernel: {t_py * 1000:9.1f} ms")
    print(f"cython kernel: {t_cy * 1000:9.1f} ms")
    print(f"speedup:       {t_py / t_cy:9.1f}x  (outputs identical)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
