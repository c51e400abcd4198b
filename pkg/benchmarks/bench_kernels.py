"""Compare the compiled kernels with their pure-Python twins.

Each kernel runs on the same inputs under both backends; the script checks
the outputs agree and prints the median wall time of each plus the speedup.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5] [--m 100000]
"""

import argparse
import statistics
import time

import numpy as np

from panbayes import _kernels_py

try:
    from panbayes import _kernels
except ImportError:  # extension not built
    _kernels = None


def _time(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def cases(universe: int, m: int, length: int, seed: int):
    gen = np.random.default_rng(seed)
    u = gen.random(m)
    sample = _kernels_py.sample_without_replacement(universe, m, u) + 1
    pos = np.full(universe + 1, -1, dtype=np.int64)
    pos[sample] = np.arange(m, dtype=np.int64)
    ids = gen.integers(1, universe + 1, size=length).astype(np.int64)
    positions, _ = _kernels_py.hit_positions(ids, pos)
    values = (gen.random(positions.size) < 0.5).astype(np.uint8)
    return {
        "sample_without_replacement": lambda mod: mod.sample_without_replacement(universe, m, u),
        "hit_positions": lambda mod: mod.hit_positions(ids, pos)[0],
        "scatter_last": lambda mod: _scatter(mod, m, positions, values),
    }


def _scatter(mod, m, positions, values):
    cells = np.zeros(m, dtype=np.uint8)
    mod.scatter_last(cells, positions, values)
    return cells


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--universe", type=int, default=1_000_000)
    ap.add_argument("--m", type=int, default=100_000)
    ap.add_argument("--length", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the Python backend is available")
    print(f"{'kernel':<28}{'python s':>12}{'cython s':>12}{'speedup':>10}  agree")
    for name, fn in cases(args.universe, args.m, args.length, args.seed).items():
        t_py, out_py = _time(lambda: fn(_kernels_py), args.repeat)
        if _kernels is None:
            print(f"{name:<28}{t_py:>12.4f}{'-':>12}{'-':>10}  -")
            continue
        t_cy, out_cy = _time(lambda: fn(_kernels), args.repeat)
        agree = np.array_equal(out_py, out_cy)
        print(f"{name:<28}{t_py:>12.4f}{t_cy:>12.4f}{t_py / t_cy:>9.1f}x  {agree}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
