"""Compiled vs. numpy kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Checks that both backends agree, then prints the best-of-N wall time per
kernel and the speedup.
"""

import argparse
import timeit

import numpy as np

from vsd import _kernels_py

try:
    from vsd import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    batch = rng.integers(0, 20, size=(128, 15), dtype=np.int64)
    x = rng.integers(0, 4, size=(512, 8), dtype=np.int64)
    y = rng.integers(0, 4, size=(2000, 8), dtype=np.int64)
    w = rng.uniform(0.05, 0.5, size=8)
    a = rng.integers(0, 20, size=200, dtype=np.int64)
    b = rng.integers(0, 20, size=180, dtype=np.int64)
    return {
        "levenshtein 200x180": lambda m: m.levenshtein(a, b),
        "pairwise_levenshtein B=128 M=15": lambda m: m.pairwise_levenshtein(batch),
        "weighted_mismatch 512x2000 M=8": lambda m: m.weighted_mismatch(x, y, w),
    }


def main(argv=None):
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _kernels is None:
        raise SystemExit("compiled kernels not built; run: pip install -e . --no-build-isolation")
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'python (ms)':>12s} {'cython (ms)':>12s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        np.testing.assert_allclose(fn(_kernels), fn(_kernels_py), rtol=1e-12)
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat))
        t_cy = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat))
        print(f"{name:36s} {t_py * 1e3:12.3f} {t_cy * 1e3:12.3f} {t_py / t_cy:7.1f}x")


if __name__ == "__main__":
    main()
