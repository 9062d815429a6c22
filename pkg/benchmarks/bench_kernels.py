"""Compiled against pure-Python kernels: the raw loops and a full boundary solve.

Usage: python3 benchmarks/bench_kernels.py [--n-steps 600] [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit
from contextlib import contextmanager

import numpy as np

from annuitize import kernels
from annuitize.boundary import solve
from annuitize.coeffs import ProblemConfig
from annuitize.oracles import CN_PSOR, PdeGrid, pde_solve


@contextmanager
def use_backend(name: str):
    impl = kernels.backends()[name]
    saved = kernels.continuation_sum, kernels.psor
    kernels.continuation_sum, kernels.psor = impl.continuation_sum, impl.psor
    try:
        yield
    finally:
        kernels.continuation_sum, kernels.psor = saved


def best(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-steps", type=int, default=600)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    names = sorted(kernels.backends())
    rng = np.random.default_rng(0)
    k = args.n_steps
    x = rng.uniform(10, 60, 1)
    c = rng.uniform(10, 60, k)
    m = rng.normal(0, 0.05, k)
    v = rng.uniform(0.01, 0.5, k)
    growth, wg, wk = rng.uniform(1, 1.5, k), rng.normal(size=k), rng.normal(size=k)

    cfg_upper = ProblemConfig.constant_f(1.2, K=2)
    cfg_lower = ProblemConfig.constant_f(0.8, K=-2)
    b_lower, _ = solve(cfg_lower, 200)
    grid = PdeGrid.around(cfg_lower, 400, 400, CN_PSOR, boundary=b_lower)

    rows = []
    for name in names:
        impl = kernels.backends()[name]
        with use_backend(name):
            rows.append((name, "continuation_sum (1 x %d)" % k,
                         best(lambda: impl.continuation_sum(x, c, m, v, growth, wg, wk, True), args.repeat * 200)))
            rows.append((name, f"solve f=1.2 K=2 n={args.n_steps}",
                         best(lambda: solve(cfg_upper, args.n_steps), args.repeat)))
            rows.append((name, "CN-PSOR 400 x 400",
                         best(lambda: pde_solve(cfg_lower, grid), max(1, args.repeat // 2))))

    width = max(len(r[1]) for r in rows)
    print(f"{'backend':<8} {'task':<{width}} {'seconds':>12}")
    for name, task, sec in rows:
        print(f"{name:<8} {task:<{width}} {sec:>12.6f}")
    if len(names) == 2:
        print()
        by = {(n, t): s for n, t, s in rows}
        for task in dict.fromkeys(r[1] for r in rows):
            print(f"speedup {task}: {by[('python', task)] / by[('cython', task)]:.1f}x")


if __name__ == "__main__":
    main()
