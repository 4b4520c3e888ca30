"""Compare the numba and numpy paths of the hot kernels.

Usage::

    python benchmarks/bench_accel.py [--repeat 20] [--full]

Micro-benchmarks call both backends directly.  ``--full`` also times a short
front run and a short two-scale run in subprocesses with ``MEMFRONT_NUMBA``
set to ``1`` and ``0``, which is how users switch paths.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from memfront import _accel

FULL_RUN = """
import time
import numpy as np
from memfront import bistable, kernels, evolve, twoscale, _accel
p = bistable.BistableProblem.cubic(0.6, -0.05)
k = kernels.tabulated(np.linspace(0, 10, 101), np.exp(-np.linspace(0, 10, 101)), 1.0, 0.05)
evolve.run_to_front(p, k, X=100.0, T_end=2.0)            # warm-up (jit)
t = time.perf_counter()
evolve.run_to_front(p, k, X=200.0, T_end=40.0)
t_hist = time.perf_counter() - t
prob = twoscale.homogenization_example(N_y=64)
twoscale.simulate_two_scale(prob, X=40.0, T_end=1.0, x0=30.0)
t = time.perf_counter()
twoscale.simulate_two_scale(prob, X=200.0, T_end=20.0, x0=150.0)
t_two = time.perf_counter() - t
print(_accel.USE_NUMBA, t_hist, t_two)
"""


def _time(fn, repeat):
    fn()  # warm-up, triggers compilation
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def micro(repeat):
    rng = np.random.default_rng(0)
    n = 4000
    lower, upper = -np.ones(n), -np.ones(n)
    diag = 2.5 * np.ones(n)
    rhs = rng.normal(size=n)
    ny, nx = 64, 4000
    cl, cu = -np.ones(ny), -np.ones(ny)
    cd = 2.5 * np.ones(ny)
    crhs = rng.normal(size=(ny, nx))
    buf = rng.normal(size=(1000, n))
    lags = np.arange(0, 1000, 1, dtype=np.int64)
    w = rng.uniform(size=lags.size)
    backends = {"numpy": _accel.numpy_impl}
    if _accel.HAVE_NUMBA:
        backends["numba"] = _accel.numba_impl
    rows = []
    for name, be in backends.items():
        tri = _accel.Tridiagonal(lower, diag, upper, be)
        cyc = _accel.CyclicTridiagonal(cl, cd, cu, be)
        out = np.empty_like(crhs)
        rows.append((name, "tridiagonal n=4000", _time(lambda: tri.solve(rhs), repeat)))
        rows.append((name, "cyclic 64 x 4000", _time(lambda: cyc.solve_columns(crhs, out), repeat)))
        rows.append((name, "history sum 1000 x 4000",
                     _time(lambda: _accel.history_sum(buf, 7, lags, w, be), repeat)))
    return rows


def full():
    out = {}
    for flag in ("1", "0"):
        env = dict(os.environ, MEMFRONT_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", FULL_RUN], env=env, capture_output=True,
                             text=True, check=True)
        used, t_hist, t_two = res.stdout.split()
        out["numba" if used == "True" else "numpy"] = {"history run": float(t_hist),
                                                        "two-scale run": float(t_two)}
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--full", action="store_true", help="also time end-to-end runs")
    parser.add_argument("--json", help="write results to this file")
    args = parser.parse_args(argv)
    rows = micro(args.repeat)
    print(f"{'backend':8s} {'kernel':28s} {'best [ms]':>10s}")
    for name, what, t in rows:
        print(f"{name:8s} {what:28s} {1e3 * t:10.3f}")
    result = {"micro": [{"backend": n, "kernel": w, "seconds": t} for n, w, t in rows]}
    if args.full:
        result["full"] = full()
        for name, times in result["full"].items():
            for what, t in times.items():
                print(f"{name:8s} {what:28s} {1e3 * t:10.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(result, fh, indent=2)


if __name__ == "__main__":
    main()
