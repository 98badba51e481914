"""Compare the compiled and numpy kernel backends on the hot loops.

Usage: python3 benchmarks/bench_kernels.py [--repeat R] [--threads T]

Prints median wall time per call for each backend, the speedup, and the
largest absolute difference between the two outputs.
"""

import argparse
import statistics
import sys
import time

import numpy as np

from gvlasov import kernels


def timed(fn, repeat):
    out = fn()
    runs = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        runs.append(time.perf_counter() - t0)
    return statistics.median(runs), out


def cases():
    rng = np.random.default_rng(0)
    q2k = rng.normal(size=(2048, 3))
    cost = rng.random((512, 512))
    return [
        ("gaussians N=1e5 d=3", lambda: kernels.gaussians(7, 0, 11, 0, 100_000, 3)),
        ("interaction sine N=2048 d=3", lambda: kernels.interaction(q2k, q2k, "sine", 0.5)),
        ("interaction tanh N=2048 d=3", lambda: kernels.interaction(q2k, q2k, "tanh_saturating", 0.5)),
        ("assign 512x512", lambda: kernels.assign(cost)),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not importable; nothing to compare", file=sys.stderr)
        return 1
    kernels.set_num_threads(args.threads)
    print(f"threads={args.threads}")
    print(f"{'case':32s} {'cython':>10s} {'numpy':>10s} {'speedup':>8s} {'max|diff|':>10s}")
    for name, fn in cases():
        kernels.backend = backends["cython"]
        tc, oc = timed(fn, args.repeat)
        kernels.backend = backends["numpy"]
        tp, op = timed(fn, args.repeat)
        diff = float(np.max(np.abs(np.asarray(oc, dtype=np.float64) - np.asarray(op, dtype=np.float64))))
        print(f"{name:32s} {tc * 1e3:9.2f}ms {tp * 1e3:9.2f}ms {tp / tc:7.1f}x {diff:10.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
