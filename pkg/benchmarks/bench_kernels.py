"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 3] [--quick]

Each kernel runs on identical inputs under both backends; the table reports
the best wall time and the speed-up. Output agreement between the backends is
covered by tests/test_kernels.py.
"""
import argparse
import time

import numpy as np

from bbcirl import kernels
from bbcirl.gridworld import GridConfig, new_env
from bbcirl.tinynn import NetSpec, mlp_new


def rollout_case(n_ep):
    env = new_env(GridConfig())
    sizes = (49, 16, 3)
    params = mlp_new(NetSpec(sizes, init_seed=0)).params
    u = np.random.default_rng(0).random((n_ep, env.horizon))

    def args():
        outs = [np.zeros((n_ep, env.horizon), dtype=np.int64) for _ in range(3)]
        return [params.copy(), np.asarray(sizes, dtype=np.int64), env.transitions, env.arrival_reward,
                0, 48, False, u, 0.00075, 0.999, True, *outs, np.zeros(n_ep, dtype=np.int64), np.zeros(n_ep)]
    return "rollout", f"{n_ep} episodes x 15 steps, (49,16,3)", lambda be: be.rollout(*args())


def clone_case(epochs):
    sizes = np.asarray((49, 16, 3), dtype=np.int64)
    rng = np.random.default_rng(1)
    states = np.sort(rng.choice(49, 30, replace=False)).astype(np.int64)
    targets = rng.dirichlet(np.ones(3), size=30)
    params = mlp_new(NetSpec(tuple(sizes), init_seed=2)).params
    return ("clone_fit", f"{epochs} full-batch epochs, 30 states",
            lambda be: be.clone_fit(params.copy(), sizes, states, targets, epochs, 0.00075))


def beta_case(F):
    sizes = np.asarray((49, 20, 1), dtype=np.int64)
    rng = np.random.default_rng(3)
    n = 5000
    nxt = rng.integers(0, 49, n).astype(np.int64)
    A, C, D = rng.uniform(0, 1, n), rng.normal(size=n), rng.uniform(1, 2, n)
    draws = rng.integers(0, n, (F, 100)).astype(np.int64)
    params = mlp_new(NetSpec(tuple(sizes), "linear", 4)).params
    return ("beta_fit", f"{F} steps x 100 samples, (49,20,1)",
            lambda be: be.beta_fit(params.copy(), sizes, nxt, A, C, D, draws, 0.01, np.zeros(F)))


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--quick", action="store_true", help="smaller workloads")
    args = p.parse_args(argv)
    if kernels.compiled_backend is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    scale = 10 if args.quick else 1
    cases = [rollout_case(500 // scale), clone_case(2000 // scale), beta_case(2000 // scale)]
    print(f"{'kernel':<10} {'workload':<36} {'python s':>10} {'compiled s':>11} {'speed-up':>9}")
    for name, workload, fn in cases:
        py = best_time(lambda: fn(kernels.python_backend), args.repeat)
        c = best_time(lambda: fn(kernels.compiled_backend), args.repeat)
        print(f"{name:<10} {workload:<36} {py:>10.3f} {c:>11.4f} {py / c:>8.0f}x")


if __name__ == "__main__":
    main()
