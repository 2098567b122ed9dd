#!/usr/bin/env python3
"""Benchmark the ragged-segment kernels: numba loops vs pure numpy.

Generates a random incidence structure shaped like a large training batch
and times every primitive under both backends.  Run:

    python benchmarks/bench_kernels.py [--segments 4096] [--avg-degree 48] [--dim 32]
"""

import argparse
import time

import numpy as np

from hyperformer.kernels import IMPLEMENTATIONS, seg_ids


def make_problem(segments, avg_degree, dim, rng):
    counts = rng.integers(1, 2 * avg_degree, size=segments)
    ptr = np.zeros(segments + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    nnz = int(ptr[-1])
    n_rows = max(segments // 2, 1)
    idx = rng.integers(0, n_rows, size=nnz)
    return {
        "ptr": ptr,
        "seg": seg_ids(ptr),
        "idx": idx,
        "n_rows": n_rows,
        "x": rng.normal(size=nnz),
        "w": rng.random(nnz),
        "dw": rng.normal(size=nnz),
        "A": rng.normal(size=(segments, dim)),
        "B": rng.normal(size=(n_rows, dim)),
    }


def calls(p):
    return [
        ("seg_softmax", lambda f: f(p["x"], p["ptr"])),
        ("seg_softmax_grad", lambda f: f(p["w"], p["dw"], p["ptr"])),
        ("gather_dot", lambda f: f(p["A"], p["seg"], p["B"], p["idx"])),
        ("weighted_seg_sum", lambda f: f(p["w"], p["B"], p["idx"], p["ptr"])),
        ("weighted_scatter_rows", lambda f: f(p["w"], p["A"], p["seg"], p["idx"], p["n_rows"])),
    ]


def bench(fn, repeats):
    fn()  # warm-up (numba compilation, caches)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--segments", type=int, default=4096)
    ap.add_argument("--avg-degree", type=int, default=48)
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args()

    p = make_problem(args.segments, args.avg_degree, args.dim, np.random.default_rng(0))
    print(f"segments={args.segments} nnz={len(p['idx'])} dim={args.dim}")
    header = f"{'kernel':<24}" + "".join(f"{b:>12}" for b in IMPLEMENTATIONS) + f"{'speedup':>10}"
    print(header)
    for name, call in calls(p):
        times = {b: bench(lambda: call(impl[name]), args.repeats)
                 for b, impl in IMPLEMENTATIONS.items()}
        row = f"{name:<24}" + "".join(f"{times[b] * 1e3:>10.3f}ms" for b in times)
        if "numba" in times:
            row += f"{times['numpy'] / times['numba']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
