"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Workloads mirror the library's hot paths: composite derivation over a
fine grid and hourly windowing of a week of 5-minute traces.
"""

import argparse
import timeit

import numpy as np

from ecc_bench import kernels


def workloads(rng):
    k, m = 8, 1000
    w = rng.uniform(0.1, 1, k)
    w /= w.sum()
    samples = np.ascontiguousarray(rng.uniform(0, 1, (k, m + 1)))
    cov = rng.normal(0, 0.001, (k, k))
    cov = np.ascontiguousarray(cov + cov.T)
    # 10 components x 168 hourly windows x 12 samples
    sizes = np.full(1680, 12)
    values = np.ascontiguousarray(rng.uniform(0, 1, sizes.sum()))
    starts = np.concatenate(([0], np.cumsum(sizes))).astype(np.intp)
    return {
        "weighted_sum": lambda mod: mod.weighted_sum(w, samples, 0.01),
        "weighted_variance": lambda mod: mod.weighted_variance(w, samples, cov),
        "segment_reduce[mean]": lambda mod: mod.segment_reduce(values, starts, kernels.MEAN),
        "segment_reduce[p95]": lambda mod: mod.segment_reduce(values, starts, kernels.P95),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args(argv)

    mods = kernels.backends()
    if "cython" not in mods:
        print("compiled kernels unavailable; only the numpy fallback is timed")
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<22}" + "".join(f"{name:>14}" for name in mods) + f"{'speedup':>10}")
    for label, fn in workloads(np.random.default_rng(0)).items():
        times = {}
        for name, mod in mods.items():
            fn(mod)  # warm-up
            times[name] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) * 1e6
        row = f"{label:<22}" + "".join(f"{times[n]:>12.1f}us" for n in mods)
        if "cython" in times:
            row += f"{times['python'] / times['cython']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
