#!/usr/bin/env python3
"""Benchmark the tape-evaluation kernels (numba vs pure numpy) and the
solvers that sit on top of them.

Run:  python3 benchmarks/bench_eval.py [--n 1000000]

The numba path needs one warmup call for JIT compilation (excluded from
timings). Selecting the numpy interpreter for the whole engine is done via
the environment flag: DUALWHEEL_PURE_NUMPY=1.
"""

import argparse
import time

import numpy as np

from dualwheel import kernels
from dualwheel.exprdsl import parse_utility
from dualwheel.numkit import PriceIncome, maximize_on_budget, minimize_expenditure

EXPRS = {
    "cobb_douglas": "q1^0.3*q2^0.7",
    "ces_rho_-1": "(0.5*q1^-1.0+0.5*q2^-1.0)^-1.0",
    "quasilinear": "q1+ln(q2)",
}


def bench_kernels(n_points: int, repeats: int = 5) -> None:
    """Both kernels across batch sizes: the jitted per-row loop owns the
    small-N regime (scalar root finding), vectorized numpy the large-N one;
    eval_tape dispatches at kernels.NUMBA_MAX_ROWS."""
    rng = np.random.default_rng(0)
    expr = parse_utility(EXPRS["ces_rho_-1"])
    codes, args = expr.tape()
    if kernels.HAVE_NUMBA:
        kernels._eval_tape_numba(codes, args, np.ones((4, 2)))  # warmup/JIT
    print("per-call latency by batch size (CES tape):")
    print(f"  {'rows':>8} {'numpy':>12} {'numba':>12} {'numba speedup':>14}")
    for n in (1, 16, 64, 256, 4096, n_points):
        bundles = 10.0 ** rng.uniform(-1, 1, size=(n, 2))
        reps = max(3, min(2000, 200_000 // max(n, 1)))
        t_np = min(
            _timed(lambda: kernels._eval_tape_numpy(codes, args, bundles))
            for _ in range(reps)
        )
        if kernels.HAVE_NUMBA:
            t_nb = min(
                _timed(lambda: kernels._eval_tape_numba(codes, args, bundles))
                for _ in range(reps)
            )
            print(
                f"  {n:>8,} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us "
                f"{t_np / t_nb:>13.1f}x"
            )
        else:
            print(f"  {n:>8,} {t_np * 1e6:>10.1f}us {'n/a':>12}")


def bench_solvers(repeats: int = 30) -> None:
    print(f"\nsolvers (mean of {repeats}, backend={kernels.backend()}):")
    for name, text in EXPRS.items():
        expr = parse_utility(text)
        pi = PriceIncome([1.0, 2.0], 10.0)
        maximize_on_budget(expr, pi)  # warm
        t0 = time.perf_counter()
        for _ in range(repeats):
            maximize_on_budget(expr, pi)
        t_primal = (time.perf_counter() - t0) / repeats
        u = expr.value(maximize_on_budget(expr, pi).bundle)
        t0 = time.perf_counter()
        for _ in range(repeats):
            minimize_expenditure(expr, pi.P, u)
        t_dual = (time.perf_counter() - t0) / repeats
        print(
            f"  {name:<16} primal {t_primal * 1e3:>7.2f}ms   dual {t_dual * 1e3:>7.2f}ms"
        )


def _timed(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1_000_000, help="bundle count")
    args = ap.parse_args()
    print(f"active backend: {kernels.backend()} "
          f"(numba available: {kernels.HAVE_NUMBA})\n")
    bench_kernels(args.n)
    bench_solvers()


if __name__ == "__main__":
    main()
