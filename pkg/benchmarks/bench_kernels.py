"""Compare the compiled and numpy root kernels.

Two workloads:
  inverse  batch inverse_gop over log-uniform effect vectors
  fit      fit_gop on simulated data with a continuous covariate, so every
           row is its own likelihood group and the kernel dominates

Usage: python3 benchmarks/bench_kernels.py [--lanes N] [--rows N] [--repeat K]
"""

import argparse
import statistics
import time

import numpy as np

from vipar import _backend
from vipar.measures import inverse_gop_many
from vipar.regression import FitConfig, GopRegressionModel, fit_gop
from vipar.simulate import DgpConfig, simulate_dataset


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times), out


def bench_inverse(name, lanes, repeat):
    rng = np.random.default_rng(0)
    C = np.exp(rng.uniform(-3, 3, size=(4, lanes)))
    best, med, res = best_of(lambda: inverse_gop_many(*C, backend=name), repeat)
    return best, med, res.probs


def bench_fit(name, rows, repeat):
    model = GopRegressionModel.from_matrix([[0.4, -0.2, 0.3, 0.0], [0.3, 0.5, -0.1, 0.2]])
    data = simulate_dataset(DgpConfig(n=rows, seed=0, l0_dist="uniform", outcome_model=model))
    saved = _backend.kernels
    _backend.kernels = _backend.load(name)
    try:
        best, med, res = best_of(lambda: fit_gop(data, FitConfig()), repeat)
    finally:
        _backend.kernels = saved
    return best, med, res


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lanes", type=int, default=200_000)
    ap.add_argument("--rows", type=int, default=5_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--fit-repeat", type=int, default=1)
    args = ap.parse_args()

    names = _backend.available()
    if "cython" not in names:
        print("compiled extension not built; only the numpy fallback is available")

    print(f"inverse_gop_many, {args.lanes} lanes (best / median of {args.repeat})")
    probs, inv_best = {}, {}
    for name in names:
        best, med, probs[name] = bench_inverse(name, args.lanes, args.repeat)
        inv_best[name] = best
        print(f"  {name:7s} {best * 1e3:9.1f} ms {med * 1e3:9.1f} ms  {best / args.lanes * 1e6:6.2f} us/lane")
    if len(names) == 2:
        diff = np.nanmax(np.abs(probs["cython"] - probs["python"]))
        print(f"  speedup {inv_best['python'] / inv_best['cython']:.2f}x, max |cython - python| = {diff:.2e}")

    print(f"\nfit_gop, {args.rows} rows, uniform l0 (best / median of {args.fit_repeat})")
    fits, fit_best = {}, {}
    for name in names:
        best, med, fits[name] = bench_fit(name, args.rows, args.fit_repeat)
        fit_best[name] = best
        r = fits[name]
        print(f"  {name:7s} {best:9.2f} s {med:9.2f} s  iterations={r.iterations} nll={r.neg_log_lik:.10g}")
    if len(names) == 2:
        d = np.max(np.abs(fits["cython"].model.matrix - fits["python"].model.matrix))
        print(f"  speedup {fit_best['python'] / fit_best['cython']:.2f}x, max coefficient difference = {d:.2e}")

if __name__ == "__main__":
    main()
