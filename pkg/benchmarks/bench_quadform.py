"""Time the batched quadratic-form kernel on both backends.

Run from the repository root after an editable install:

    python3 benchmarks/bench_quadform.py

The workload mirrors the net search: a few score operators against many
thousands of candidate states.  Times are best-of-repeat wall clock.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from qiplab.kernels import BACKEND, available_backends, quad_forms


def workload(rng: np.random.Generator, k: int, d: int, n: int):
    g = rng.normal(size=(k, d, d)) + 1j * rng.normal(size=(k, d, d))
    ops = (g + g.conj().transpose(0, 2, 1)) / 2.0
    states = rng.normal(size=(n, d)) + 1j * rng.normal(size=(n, d))
    states /= np.linalg.norm(states, axis=1, keepdims=True)
    return np.ascontiguousarray(ops), np.ascontiguousarray(states)


def best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--ops", type=int, default=8, help="number of score operators")
    parser.add_argument("--dim", type=int, default=2, help="state dimension")
    parser.add_argument("--states", type=int, default=200_000, help="batch size")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    ops, states = workload(rng, args.ops, args.dim, args.states)
    print(f"default backend: {BACKEND}")
    print(f"workload: {args.ops} ops, dim {args.dim}, {args.states} states")

    results: dict[str, float] = {}
    for backend in available_backends():
        quad_forms(ops, states, backend=backend)  # warm up
        results[backend] = best_of(lambda: quad_forms(ops, states, backend=backend), args.repeats)

    reference = quad_forms(ops, states, backend="python")
    for backend, seconds in results.items():
        table = quad_forms(ops, states, backend=backend)
        drift = float(np.max(np.abs(table - reference)))
        rate = args.ops * args.states / seconds / 1e6
        print(f"{backend:>9}: {seconds * 1e3:8.2f} ms   {rate:7.1f} Mforms/s   drift {drift:.2e}")

    if "compiled" in results:
        print(f"speedup: {results['python'] / results['compiled']:.2f}x")


if __name__ == "__main__":
    main()
