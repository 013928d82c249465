"""Benchmark the numba and numpy kernel-evaluation engines.

Builds the full latent tree constraint kernel at a configurable scale and
times batch evaluation over sampled index tuples plus the divide-and-conquer
projection sweep, once per engine.

    python3 benchmarks/bench_engines.py --l 8 --n 200 --budget 400
"""

import argparse
import math
import time

import numpy as np

from polytest import (
    BudgetConfig,
    compile_kernel,
    enumerate_constraints,
    estimate_g,
    sample_mvn,
    sample_tuples,
    setup_covariance,
    star_tree,
)
from polytest.engine import HAVE_NUMBA
from polytest.ustat import compute_u_prime


def bench(engine: str, data, kernel, ts, repeats: int) -> tuple[float, float]:
    import os

    os.environ["POLYTEST_ENGINE"] = engine
    compiled = compile_kernel(kernel)
    V = compiled.base_values(data)
    compiled.eval_tuples(V, ts.tuples[:8])  # warm up (JIT compile)
    t0 = time.perf_counter()
    for _ in range(repeats):
        u, h = compute_u_prime(data, kernel, ts, compiled=compiled, V=V)
    t_u = (time.perf_counter() - t0) / repeats
    t0 = time.perf_counter()
    estimate_g(data, kernel, seed=0, compiled=compiled, V=V)
    t_g = time.perf_counter() - t0
    return t_u, t_g


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--l", type=int, default=8)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--budget", type=int, default=400)
    ap.add_argument("--mode", choices=("all", "eq"), default="all")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    mode = "all" if args.mode == "all" else "equalities_only"
    tree = star_tree(args.l)
    kernel = enumerate_constraints(tree, mode).to_kernel()
    _, sigma = setup_covariance("a", args.l, np.random.default_rng(0))
    data = sample_mvn(sigma, args.n, np.random.default_rng(1))
    ts = sample_tuples(
        BudgetConfig(n=args.n, m=kernel.order, N=args.budget, seed=2)
    )
    compiled = compile_kernel(kernel)
    print(
        f"l={args.l} n={args.n} N={args.budget} mode={mode}: "
        f"p={kernel.p} constraints, order m={kernel.order}, "
        f"{len(compiled.coef)} instances, {ts.n_hat} tuples, "
        f"K={(args.n - 1) // (kernel.order - 1)} blocks/index"
    )
    engines = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    results = {}
    for engine in engines:
        t_u, t_g = bench(engine, data, kernel, ts, args.repeats)
        results[engine] = (t_u, t_g)
        print(f"{engine:>6}: U' over {ts.n_hat} tuples {t_u * 1e3:8.1f} ms   "
              f"projection sweep {t_g * 1e3:8.1f} ms")
    if len(results) == 2:
        su = results["numpy"][0] / results["numba"][0]
        sg = results["numpy"][1] / results["numba"][1]
        print(f"speedup numba over numpy: U' x{su:.1f}, projection x{sg:.1f}")


if __name__ == "__main__":
    main()
