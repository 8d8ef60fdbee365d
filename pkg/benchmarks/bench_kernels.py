"""Time the batched kernels under both backends on the exhaustive sweeps.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--workload ll|bdll|all]
"""

from __future__ import annotations

import argparse
import itertools
import time

import numpy as np

from stabcon import kernels
from stabcon.algorithms import HALF
from stabcon.model import bdll_loops, ll_patterns


def _workload(name: str):
    if name == "ll":
        pats, horizon = list(ll_patterns(5, 2)), 37
    else:
        pats, horizon = list(bdll_loops(3, 6)), 96
    jobs = [(p, i) for p in pats for i in itertools.product((0, 1), repeat=2)]
    adj = np.stack([p.unroll(horizon) for p, _ in jobs])
    ranks = np.array([i for _, i in jobs], dtype=np.int64)
    return adj, ranks, horizon


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--workload", choices=["ll", "bdll", "all"], default="all")
    args = ap.parse_args(argv)
    backends = ["numpy"]
    try:
        import numba  # noqa: F401

        backends.insert(0, "numba")
    except ImportError:
        print("numba not installed; timing numpy only")
    names = ["ll", "bdll"] if args.workload == "all" else [args.workload]
    print(f"{'workload':10} {'kernel':12} {'runs':>7} " + " ".join(f"{b:>10}" for b in backends))
    for name in names:
        adj, ranks, horizon = _workload(name)
        theta = HALF.table(horizon)
        cases = {
            "heard-of": lambda b: kernels.heard_of_masks(adj, backend=b),
            "minmax": lambda b: kernels.minmax(adj, ranks, backend=b),
            "safe-minmax": lambda b: kernels.safe_minmax(adj, ranks, theta, backend=b),
        }
        for kname, fn in cases.items():
            for b in backends:
                fn(b)  # warm-up (jit compile)
            ref = None
            times = []
            for b in backends:
                out = fn(b)
                ref = out if ref is None else ref
                assert np.array_equal(ref, out), f"{kname}: backends disagree"
                times.append(_time(lambda: fn(b), args.repeat))
            print(f"{name:10} {kname:12} {adj.shape[0]:7d} " + " ".join(f"{t:9.3f}s" for t in times))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
