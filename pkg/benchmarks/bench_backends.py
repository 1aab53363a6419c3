"""Timing comparison between the compiled and pure-Python kernels.

Runs the three hot kernels (propagate, propagate_sens, overlap_grad) on
identical synthetic workloads through both backends and prints a table of
median wall times plus speedups. The workloads mimic the package's real
shapes: a diagonal H0' with unit max norm, a symmetric normalized dipole,
and a resonant-ish coupling profile with a mix of zero and nonzero steps.

Usage:
    python benchmarks/bench_backends.py [--steps 20000] [--dims 2 3 4 8]
                                        [--repeat 5]
"""

from __future__ import annotations

import argparse
import time
from statistics import median

import numpy as np

from qdip._kernels import pure

try:
    from qdip._kernels import _core
except ImportError:
    _core = None


def _workload(n: int, steps: int, seed: int = 1):
    rng = np.random.default_rng(seed)
    h0 = np.sort(rng.uniform(-1.0, 1.0, n))
    h0 /= np.abs(h0).max()
    mu = rng.uniform(-1.0, 1.0, (n, n))
    mu = np.triu(mu, 1)
    mu = mu + mu.T
    mu /= np.abs(mu).max()
    dt = np.full(steps, 0.2)
    lam = 0.05 * np.cos(0.9 * np.cumsum(dt))
    lam[rng.uniform(size=steps) < 0.1] = 0.0  # field-free gaps
    pairs = np.array([[0, 1], [n - 2, n - 1]], dtype=np.int64)
    psi0 = np.zeros(n, dtype=complex)
    psi0[0] = 1.0
    psif = np.zeros(n, dtype=complex)
    psif[-1] = 1.0
    return h0, mu, lam, dt, pairs, psi0, psif


def _time(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return median(times)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=20000)
    parser.add_argument("--dims", type=int, nargs="+", default=[2, 3, 4, 8])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    if _core is None:
        print("compiled backend not built; showing pure-Python times only")

    kernels = ["propagate", "propagate_sens", "overlap_grad"]
    header = f"{'kernel':<15}{'n':>4}{'steps':>9}{'pure [ms]':>12}"
    if _core is not None:
        header += f"{'cython [ms]':>13}{'speedup':>9}"
    print(header)
    print("-" * len(header))

    for n in args.dims:
        h0, mu, lam, dt, pairs, psi0, psif = _workload(n, args.steps)
        calls = {
            "propagate": lambda b: b.propagate(h0, mu, lam, dt),
            "propagate_sens": lambda b: b.propagate_sens(h0, mu, lam, dt, pairs),
            "overlap_grad": lambda b: b.overlap_grad(h0, mu, lam, dt, psi0, psif),
        }
        for name in kernels:
            t_pure = _time(lambda: calls[name](pure), args.repeat)
            line = f"{name:<15}{n:>4}{args.steps:>9}{t_pure * 1e3:>12.1f}"
            if _core is not None:
                t_core = _time(lambda: calls[name](_core), args.repeat)
                line += f"{t_core * 1e3:>13.1f}{t_pure / t_core:>9.1f}"
            print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
