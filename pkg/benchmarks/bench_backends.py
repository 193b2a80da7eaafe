"""Timing comparison: compiled fit kernel vs pure-python loop vs generic optimizer.

Runs repeated fits on freshly simulated datasets and reports per-backend
median wall time plus the speedup ratios. The compiled kernel must beat the
generic optimizer by a wide margin for the alternating-update design to pay
its way; the pure-python loop shows how much of that margin comes from the
algorithm versus the compilation.

Usage: python3 benchmarks/bench_backends.py [--fits 500] [--n1 50] [--n2 50]
"""

from __future__ import annotations

import argparse
import os
import statistics
import time

import numpy as np

from remeasure import HAVE_COMPILED, ParameterVector, Scenario, StudyDesign, fit_generic, fit_mle
from remeasure.simulate import generate_dataset


def make_datasets(count: int, n1: int, n2: int):
    scenario = Scenario(
        design=StudyDesign(n1=n1, n2=n2, n1_prime=n1 // 2, p=2),
        truth=ParameterVector(
            a0=0.5, a1=0.5, b=np.array([0.0, -0.5]), rho=0.6, sigma1=2.0, sigma2=1.0
        ),
        seed=20240817,
    )
    return [generate_dataset(scenario, rep) for rep in range(count)]


def time_fits(datasets, fitter) -> list[float]:
    times = []
    for data in datasets:
        start = time.perf_counter()
        result = fitter(data)
        times.append(time.perf_counter() - start)
        assert result.converged
    return times


def run_backend(datasets, name: str):
    if name == "generic":
        return time_fits(datasets, fit_generic)
    previous = os.environ.get("REMEASURE_BACKEND")
    os.environ["REMEASURE_BACKEND"] = name
    try:
        return time_fits(datasets, fit_mle)
    finally:
        if previous is None:
            del os.environ["REMEASURE_BACKEND"]
        else:
            os.environ["REMEASURE_BACKEND"] = previous


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--fits", type=int, default=500)
    parser.add_argument("--n1", type=int, default=50)
    parser.add_argument("--n2", type=int, default=50)
    args = parser.parse_args()

    datasets = make_datasets(args.fits, args.n1, args.n2)
    backends = (["compiled"] if HAVE_COMPILED else []) + ["python", "generic"]
    medians = {}
    for name in backends:
        times = run_backend(datasets, name)
        medians[name] = statistics.median(times)
        print(
            f"{name:>9}: median {medians[name] * 1e3:8.3f} ms   "
            f"mean {statistics.fmean(times) * 1e3:8.3f} ms   "
            f"total {sum(times):6.2f} s   ({args.fits} fits, n1={args.n1}, n2={args.n2})"
        )

    fastest = "compiled" if HAVE_COMPILED else "python"
    ratio = medians["generic"] / medians[fastest]
    print(f"\nspeedup vs generic optimizer: {ratio:.1f}x ({fastest} kernel)")
    if HAVE_COMPILED:
        print(f"speedup of compiled kernel over python loop: {medians['python'] / medians['compiled']:.1f}x")


if __name__ == "__main__":
    main()
