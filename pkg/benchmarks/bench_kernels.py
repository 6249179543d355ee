"""Compare the compiled and pure-numpy kernel paths.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is timed on identical inputs through both implementations and
the outputs are checked for agreement before timings are reported.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from randbell import inequalities as ineq
from randbell import lcd_lp, quantum, sampling


def _best(fn, repeat):
    fn()  # warm-up (compilation, caches)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    u = sampling._uniform_rows_numba(np.uint64(42), np.uint64(0), 2048, 20)
    dirs5 = sampling.frames_from_uniforms(u, 5, "rim")
    u12 = sampling._uniform_rows_numba(np.uint64(42), np.uint64(0), 64, 48)
    dirs12 = sampling.frames_from_uniforms(u12, 12, "rim")
    full12 = quantum.ghz_full_tensors(dirs12)
    marg3 = quantum.ghz_marginal_tensors(dirs5[:1, :3].copy())[0]
    prob = lcd_lp.problem_from_statistics(3, marg3)

    yield (
        "uniform_rows 2048x20",
        lambda: sampling._uniform_rows_numba(np.uint64(42), np.uint64(0), 2048, 20),
        lambda: sampling._uniform_rows_numpy(42, 0, 2048, 20),
    )

    def ghz_full(kernel, dirs):
        out = np.empty((dirs.shape[0], 2 ** dirs.shape[1]))
        kernel(dirs, out)
        return out

    yield (
        "ghz full n=12 x64",
        lambda: ghz_full(quantum._ghz_full_numba, dirs12),
        lambda: ghz_full(quantum._ghz_full_numpy, dirs12),
    )

    def ghz_marg(kernel, dirs):
        out = np.empty((dirs.shape[0], 3 ** dirs.shape[1]))
        kernel(dirs, out)
        return out

    yield (
        "ghz marginals n=5 x2048",
        lambda: ghz_marg(quantum._ghz_marginals_numba, dirs5),
        lambda: ghz_marg(quantum._ghz_marginals_numpy, dirs5),
    )

    def fwht(kernel):
        a = full12.copy()
        kernel(a)
        return a

    yield ("fwht n=12 x64", lambda: fwht(ineq._fwht_rows_numba), lambda: fwht(ineq._fwht_rows_numpy))

    args = (prob.A, prob.b, 10_000, lcd_lp.PIVOT_TOL, lcd_lp.HARRIS_TOL, lcd_lp.COST_TOL, lcd_lp.STALL_LIMIT)
    yield (
        "phase-1 simplex n=3",
        lambda: lcd_lp._phase1_numba(*args)[0],
        lambda: lcd_lp._phase1_numpy(*args)[0],
    )


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"{'kernel':28s} {'numba [ms]':>12s} {'numpy [ms]':>12s} {'speedup':>8s}")
    for name, fast, slow in cases():
        a, b = np.asarray(fast()), np.asarray(slow())
        if not np.allclose(a, b, atol=1e-12, rtol=0):
            raise SystemExit(f"{name}: implementations disagree")
        tf = _best(fast, args.repeat)
        ts = _best(slow, args.repeat)
        print(f"{name:28s} {tf * 1e3:12.3f} {ts * 1e3:12.3f} {ts / tf:8.1f}")


if __name__ == "__main__":
    main()
