"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 3]
"""

import argparse
import timeit

import numpy as np

from tbsplit import _pykernels

try:
    from tbsplit import _kernels
except ImportError:
    _kernels = None


def cases(n, seed):
    rng = np.random.default_rng(seed)
    times = np.cumsum(rng.exponential(1.0, n))
    u = rng.random(n)
    return {
        "lindley_backlog": lambda m: m.lindley_backlog(times, 1.05, 0.0),
        "bucket_departures fcfs": lambda m: m.bucket_departures(times, 1.05, 4.0, 4.0, _pykernels.FCFS, None),
        "bucket_departures random": lambda m: m.bucket_departures(times, 1.05, 4.0, 4.0, _pykernels.RANDOM, u),
        "compensated_cumsum": lambda m: m.compensated_cumsum(times),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    print(f"n = {args.n}, best of {args.repeat}")
    print(f"{'kernel':<28}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    for name, fn in cases(args.n, args.seed).items():
        py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat))
        if _kernels is None:
            print(f"{name:<28}{py:>12.4f}{'n/a':>12}{'':>10}")
            continue
        assert np.array_equal(fn(_pykernels), fn(_kernels))
        cy = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat))
        print(f"{name:<28}{py:>12.4f}{cy:>12.4f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
