"""Compiled vs pure-Python kernel timings.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one row per kernel with the best-of-N wall time of each backend and
the speedup. Without the compiled extension only the fallback is timed.
"""
import argparse
import timeit

import numpy as np

from fedbatch import kernels
from fedbatch.kernels import pure


def cases():
    rng = np.random.default_rng(0)
    comm4, q4 = rng.uniform(0, 2, 4), rng.uniform(0.1, 1, 4)
    comm10, q10 = rng.uniform(0, 2, 10), rng.uniform(0.1, 1, 10)
    cap = float(np.max(comm10 + q10)) * 50
    ones = np.ones(10, dtype=np.int64)
    w, c = rng.normal(size=100), rng.uniform(0.1, 1, 100)
    s, z = rng.uniform(0, 1, 10), rng.normal(size=(10, 5, 100))
    return [
        ("minmax_compositions K=4 B=40", "minmax_compositions", (comm4, q4, 40)),
        ("greedy_fill K=10 extra=400", "greedy_fill", (comm10, q10, ones, 400, cap)),
        ("local_sgd_devices K=10 H=5 D=100", "local_sgd_devices", (w, c, 0.1, s, z)),
    ]


def best_time(fn, args, repeat):
    number = 1
    while timeit.timeit(lambda: fn(*args), number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    compiled = kernels.BACKEND == "compiled"
    print(f"backend: {kernels.BACKEND}")
    print(f"{'kernel':<36}{'python [s]':>14}{'compiled [s]':>14}{'speedup':>10}")
    for label, name, a in cases():
        tp = best_time(getattr(pure, name), a, args.repeat)
        if compiled:
            tc = best_time(getattr(kernels, name), a, args.repeat)
            print(f"{label:<36}{tp:>14.3e}{tc:>14.3e}{tp / tc:>9.1f}x")
        else:
            print(f"{label:<36}{tp:>14.3e}{'-':>14}{'-':>10}")


if __name__ == "__main__":
    main()
