"""Time the compiled kernels against the numpy fallback on representative inputs.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``.  Each row shows
the best-of-N wall time per backend, the speedup, and whether the two
backends returned identical results on that input.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from poisoncert._kernels import compiled_backend, python_backend


def sweep_case(rng, n=256, r=2000):
    starts = np.sort(rng.uniform(0, 2 * np.pi, size=(n, r)), axis=1)
    ends = np.sort(np.mod(starts + np.pi, 2 * np.pi), axis=1)
    wrap = rng.integers(0, r // 2, size=n)
    return (starts, ends, wrap, 1e-12)


def pocket_case(rng, m=2000, d=10, epochs=20):
    # integer-valued rows keep the two backends' dot products bit-identical
    Z = rng.integers(-5, 6, size=(m, d)).astype(np.float64)
    w0 = rng.integers(-2, 3, size=d).astype(np.float64)
    orders = np.stack([rng.permutation(m) for _ in range(epochs)])
    return (Z, w0, orders)


def scan_case(rng, m=20000, K=51, n_labels=10):
    # a dominant label near the query makes both scans run long before succeeding
    labels = np.where(rng.random(m) < 0.97, 0, rng.integers(1, n_labels, size=m))
    return (labels, K, 0, n_labels)


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(same(x, z) for x, z in zip(a, b))
    return bool(np.array_equal(np.asarray(a), np.asarray(b)))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if compiled_backend is None:
        raise SystemExit("compiled extension not built; run `pip install -e .` first")
    rng = np.random.default_rng(args.seed)
    cases = [("circle_sweep_block", sweep_case(rng)), ("pocket_epochs", pocket_case(rng)),
             ("knn_add_scan", scan_case(rng)), ("knn_remove_scan", scan_case(rng))]
    print(f"{'kernel':<20} {'python s':>10} {'cython s':>10} {'speedup':>8}  identical")
    for name, case in cases:
        py_fn, c_fn = getattr(python_backend, name), getattr(compiled_backend, name)
        t_py = min(timeit.repeat(lambda: py_fn(*case), number=1, repeat=args.repeat))
        t_c = min(timeit.repeat(lambda: c_fn(*case), number=1, repeat=args.repeat))
        print(f"{name:<20} {t_py:>10.4f} {t_c:>10.4f} {t_py / t_c:>8.1f}  {same(py_fn(*case), c_fn(*case))}")


if __name__ == "__main__":
    main()
