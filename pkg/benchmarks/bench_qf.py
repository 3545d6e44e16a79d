"""Compare the compiled and pure-Python chi-square mixture backends.

    python benchmarks/bench_qf.py [--repeat 5]

Reports the median wall time per call for SKAT-sized eigenvalue lists and
the largest absolute difference between the two backends' results.
"""
import argparse
import time

import numpy as np

from knntest import qf


def case(m, rng):
    lam = np.sort(rng.gamma(0.5, 1.0, m))[::-1]
    c = float(lam.sum() + 2.0 * np.sqrt(2.0 * (lam ** 2).sum()))
    return lam, np.zeros(m), np.ones(m, dtype=np.int64), c


def timeit(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args, 100_000, 1e-6)
        times.append(time.perf_counter() - t)
    return float(np.median(times)), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", default="10,50,200,800")
    ns = ap.parse_args()
    if qf.qf_compiled is None:
        raise SystemExit("compiled backend not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(1)
    print(f"{'m':>6} {'python ms':>11} {'cython ms':>11} {'speedup':>8} {'max |diff|':>11}")
    for m in (int(s) for s in ns.sizes.split(",")):
        lam, nc, n, c = case(m, rng)
        args = (lam, nc, n, 0.0, c)
        tp, (vp, fp, _) = timeit(qf.qf_python, args, ns.repeat)
        tc, (vc, fc, _) = timeit(qf.qf_compiled, args, ns.repeat)
        assert fp == fc, (fp, fc)
        print(f"{m:>6} {1e3 * tp:>11.3f} {1e3 * tc:>11.3f} {tp / tc:>8.1f} {abs(vp - vc):>11.2e}")


if __name__ == "__main__":
    main()
