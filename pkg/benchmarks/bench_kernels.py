"""Compiled vs pure-Python kernel timings.

Run from the repository root after building the extension::

    python3 benchmarks/bench_kernels.py [--repeat 200]

Reports median wall time of the Z=8 reduced MAP solve and of one phase of
the simulator for each available backend, and checks that both backends
return the same answers.
"""

from __future__ import annotations

import argparse
import math
import statistics
import time

import numpy as np

from cvdemand import _pykernels
from cvdemand.kernels import compiled_backend


def solve_cases(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    Z = 8
    out = []
    for _ in range(n):
        N = rng.uniform(0, 30, Z) * (rng.random(Z) < 0.7)
        N[0] = max(N[0], 2.0)
        W = np.where(N > 0, rng.uniform(2, 60, Z), 0.0)
        mu = rng.dirichlet(np.full(Z, 4.0))
        s2 = rng.uniform(4e-4, 0.01, Z)
        out.append((N, W, mu, s2, 10.0, 0.0))
    return out


def sim_case(seed: int = 0):
    rng = np.random.default_rng(seed)
    dt, C, G, K = 0.5, 120.0, 40.0, 30
    n_grid = int((K * C + 600) / dt)
    t = np.arange(n_grid) * dt
    pos = (t - 60.0) % C
    is_red = ((t >= 60.0) & (pos < C - G) & (t < 60.0 + K * C)).astype(np.uint8)
    green_start = 60.0 + np.floor((t - 60.0) / C) * C + (C - G)
    arr = np.sort(60.0 + K * C * rng.random(30 * K))
    tie = rng.random(arr.size)
    return (arr, 3, is_red, green_start, dt, 12.0, 6.0, 1.5, 400.0, 60.0, tie)


def median_ms(fn, args_list, repeat):
    times = []
    for i in range(repeat):
        args = args_list[i % len(args_list)]
        t0 = time.perf_counter()
        fn(*args)
        times.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    backends = [("python", _pykernels)]
    if compiled_backend is not None:
        backends.append(("cython", compiled_backend))
    else:
        print("compiled kernels not built; timing the Python backend only")
    cases = solve_cases(64)
    sim = [sim_case()]
    results = {}
    for name, mod in backends:
        results[name] = {
            "solve_reduced Z=8": median_ms(mod.solve_reduced, cases, args.repeat),
            "simulate_phase 30 cycles": median_ms(mod.simulate_phase, sim, max(3, args.repeat // 50)),
        }
    print(f"{'kernel':28s}" + "".join(f"{n:>12s}" for n, _ in backends) + "     speedup")
    for key in results["python"]:
        row = [results[n][key] for n, _ in backends]
        sp = row[0] / row[-1] if len(row) > 1 else math.nan
        print(f"{key:28s}" + "".join(f"{v:10.3f}ms" for v in row) + f"{sp:11.1f}x")
    if compiled_backend is not None:
        worst = 0.0
        for c in cases:
            a, b = _pykernels.solve_reduced(*c), compiled_backend.solve_reduced(*c)
            assert a[3] == b[3], "status codes differ between backends"
            worst = max(worst, abs(a[0] - b[0]) / max(1.0, abs(a[0])))
        sa, sb = _pykernels.simulate_phase(*sim[0]), compiled_backend.simulate_phase(*sim[0])
        same = all(np.array_equal(np.asarray(x), np.asarray(y)) for x, y in zip(sa, sb))
        print(f"max relative lambda0 difference {worst:.2e}; simulator outputs identical: {same}")


if __name__ == "__main__":
    main()
