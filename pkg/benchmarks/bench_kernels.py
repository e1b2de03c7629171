"""Time the numba and numpy kernel backends on representative workloads.

    python benchmarks/bench_kernels.py [--h1 5000] [--h2 300] [--sweeps 2000]

Both backends receive identical inputs; the script also reports the largest
absolute difference between their outputs.
"""

import argparse
import time

import numpy as np

from pmsplan import kernels
from pmsplan import worked_example as we
from pmsplan.inference import sample_prior
from pmsplan.priors import PriorSpec


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_sampler(kern, sweeps, chains=4, seed=0):
    rng = np.random.default_rng(seed)
    N = we.N0[None].astype(float)
    Y = we.Y0[None].astype(float)
    svec = rvec = np.ones(1)
    mu = np.full(6, np.log(0.1 / 0.9))
    normals = rng.standard_normal((chains, sweeps, 6))
    uniforms = rng.random((chains, sweeps, 6))

    def run():
        h = np.tile(mu, (chains, 1))
        lt = kern.log_target(h, N, Y, svec, rvec, mu, 2.0, 4)
        scales = np.full((chains, 6), 1.0)
        acc = np.zeros((chains, 6), np.int64)
        tot = np.zeros((chains, 6), np.int64)
        out = np.empty((chains, sweeps, 6))
        kern.mh_segment(h, lt, scales, acc, tot, normals, uniforms, N, Y, svec, rvec,
                        mu, 2.0, 4, 0, True, out)
        return out

    return run


def bench_losses(kern, h1, h2, seed=0):
    draws = sample_prior(PriorSpec(np.full(6, 0.1), 2.0), 4, h1, seed).values
    order = np.ascontiguousarray(np.argsort(draws, axis=0).T)
    vals = np.ascontiguousarray(np.take_along_axis(draws, order.T, axis=0).T)
    weights = np.ones_like(draws)
    D = np.random.default_rng(seed).random((h1, h2))
    D /= D.sum(axis=0)
    factor = np.ones(6)

    def run():
        out = np.empty(h2)
        kern.column_losses(vals, order, weights, D, 0, 0.5, 1.0, 0.2, factor, out)
        return out

    return run


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--h1", type=int, default=5000)
    p.add_argument("--h2", type=int, default=300)
    p.add_argument("--sweeps", type=int, default=2000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()

    fast, ref = kernels.get_backend("numba"), kernels.get_backend("numpy")
    cases = {
        f"mh_segment ({args.sweeps} sweeps x 4 chains)": lambda k: bench_sampler(k, args.sweeps),
        f"column_losses (h1={args.h1}, h2={args.h2})": lambda k: bench_losses(k, args.h1, args.h2),
    }
    print(f"{'kernel':45s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, make in cases.items():
        run_fast, run_ref = make(fast), make(ref)
        out_fast = run_fast()  # compile / warm up
        out_ref = run_ref()
        t_fast = best_of(run_fast, args.repeat)
        t_ref = best_of(run_ref, args.repeat)
        diff = float(np.max(np.abs(out_fast - out_ref)))
        print(f"{name:45s} {t_ref:10.4f} {t_fast:10.4f} {t_ref / t_fast:8.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
