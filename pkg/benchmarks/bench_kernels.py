"""Compare the compiled and numpy planning kernels.

    python benchmarks/bench_kernels.py [--vehicles 1,2,4,8] [--horizon 10] [--repeats 200]

Prints time per cost+gradient evaluation and per full MPC solve for each
backend, plus the speedup.  Also checks that both backends agree.
"""
import argparse
import time

import numpy as np

from mvnav import _kernels_py
from mvnav.costs import CostWeights, Margins
from mvnav.simulation import generate_scenario

try:
    from mvnav import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None


def bench_cost_grad(mod, args, repeats):
    mod.cost_grad(*args)
    t0 = time.perf_counter()
    for _ in range(repeats):
        mod.cost_grad(*args)
    return (time.perf_counter() - t0) / repeats


def bench_solve(mod, scenario, repeats):
    # route the optimiser through a specific kernel module
    import mvnav.optimizer as opt
    saved = opt.kernels
    opt.kernels = mod
    try:
        opt.optimize(scenario, scenario.starts)
        t0 = time.perf_counter()
        for _ in range(repeats):
            opt.optimize(scenario, scenario.starts)
        return (time.perf_counter() - t0) / repeats
    finally:
        opt.kernels = saved


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--vehicles", default="1,2,4,8", help="vehicle counts to test")
    ap.add_argument("--obstacles", type=int, default=1, help="obstacles per scenario")
    ap.add_argument("--horizon", type=int, default=10, help="planning horizon")
    ap.add_argument("--repeats", type=int, default=200, help="cost/gradient repeats")
    ap.add_argument("--solve-repeats", type=int, default=3, help="full-solve repeats")
    a = ap.parse_args(argv)
    if _kernels_c is None:
        print("compiled extension not available; only the numpy backend can run")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'N':>3} {'grad py (us)':>13} {'grad cy (us)':>13} {'x':>6} {'solve py (ms)':>14} "
          f"{'solve cy (ms)':>14} {'x':>6} {'max|dg|':>9}")
    for n in (int(v) for v in a.vehicles.split(",")):
        sc = generate_scenario(n, a.obstacles, bounds=(-15, -15, 15, 15), rng=rng)
        u = np.stack([rng.uniform(-1, 1, (a.horizon, n)), rng.uniform(-0.7, 0.7, (a.horizon, n))], -1)
        args = (u, sc.starts, sc.targets, sc.obstacles, np.array([0.2, 0.95, 0.5]), CostWeights().as_array(),
                Margins().as_array(), 1e-3)
        diff = np.max(np.abs(_kernels_py.cost_grad(*args)[1] - _kernels_c.cost_grad(*args)[1]))
        tp = bench_cost_grad(_kernels_py, args, max(a.repeats // 10, 5))
        tc = bench_cost_grad(_kernels_c, args, a.repeats)
        sp = bench_solve(_kernels_py, sc, a.solve_repeats)
        scy = bench_solve(_kernels_c, sc, a.solve_repeats)
        print(f"{n:>3} {tp * 1e6:>13.1f} {tc * 1e6:>13.1f} {tp / tc:>6.1f} {sp * 1e3:>14.2f} {scy * 1e3:>14.2f} "
              f"{sp / scy:>6.1f} {diff:>9.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
