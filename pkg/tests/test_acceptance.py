"""End-to-end acceptance checks, one pass/fail line per criterion.

Covers: agreement between the alternating-update estimator and a generic
optimizer, finite-difference stationarity, monotone ascent, type I error
control, bootstrap small-sample control, MSE ordering against baselines,
baseline inflation, the published minimal-remeasurement counts, analytic
versus empirical power, variance calibration, non-Gaussian robustness, and
compiled-kernel speed. Runtime-bounded criteria assert their budgets.
"""

import json
import statistics
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from remeasure import (
    ParameterVector,
    PowerQuery,
    Scenario,
    StudyDesign,
    fit_generic,
    fit_mle,
    generate_dataset,
    log_likelihood,
    monte_carlo,
    scenario_from_json,
    theoretical_power,
    variance_a0,
)
from remeasure.cli import main

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

REFERENCE_SCENARIO = Scenario(
    design=StudyDesign(n1=50, n2=50, n1_prime=25, p=1),
    truth=ParameterVector(
        a0=0.5, a1=0.5, b=np.array([-0.5]), rho=0.6, sigma1=2.0, sigma2=1.0
    ),
    seed=1,
)


def load_scenario(name: str) -> Scenario:
    return scenario_from_json((SCENARIOS / name).read_text())


@pytest.fixture(scope="module")
def reference_datasets():
    return [generate_dataset(REFERENCE_SCENARIO, rep) for rep in range(100)]


@pytest.fixture(scope="module")
def reference_fits(reference_datasets):
    return [fit_mle(data) for data in reference_datasets]


def fd_score(data, theta, h=1e-6):
    """Central finite-difference gradient of the log-likelihood."""
    arr = theta.to_array()
    p = data.design.p
    grad = np.empty_like(arr)
    for i in range(len(arr)):
        step = h * (1.0 + abs(arr[i]))
        hi, lo = arr.copy(), arr.copy()
        hi[i] += step
        lo[i] -= step
        grad[i] = (
            log_likelihood(data, ParameterVector.from_array(hi, p))
            - log_likelihood(data, ParameterVector.from_array(lo, p))
        ) / (2.0 * step)
    return grad


def test_estimator_matches_generic_optimizer(reference_datasets, reference_fits):
    """On 100 seeded datasets the fast fits agree with a quasi-Newton oracle."""
    start = time.perf_counter()
    agree = 0
    for data, fast in zip(reference_datasets, reference_fits):
        slow = fit_generic(data)
        ll_close = abs(fast.loglik - slow.loglik) <= 1e-6 * (1.0 + abs(slow.loglik))
        par_close = np.max(np.abs(fast.theta.to_array() - slow.theta.to_array())) <= 1e-4
        agree += bool(ll_close and par_close)
    elapsed = time.perf_counter() - start
    assert agree >= 99, f"only {agree}/100 datasets matched the generic optimizer"
    assert elapsed < 120.0, f"comparison took {elapsed:.1f}s"


def test_finite_difference_stationarity(reference_datasets, reference_fits):
    """Numerical gradients vanish at every converged estimate."""
    for data, fit in zip(reference_datasets, reference_fits):
        assert fit.converged
        bound = 1e-4 * (1.0 + abs(fit.loglik))
        worst = np.max(np.abs(fd_score(data, fit.theta)))
        assert worst < bound, f"max |FD score| {worst:.2e} exceeds {bound:.2e}"


def test_monotone_ascent(reference_fits):
    """The objective never decreases across update sweeps."""
    for fit in reference_fits:
        drops = np.diff(fit.loglik_trace)
        assert np.all(drops >= -1e-10), f"objective fell by {-drops.min():.2e}"


def test_type_i_error_control():
    """Null rejection at alpha=0.05 stays within [0.035, 0.070] for 10/25/50 remeasured."""
    start = time.perf_counter()
    rates = {}
    for name in ("null_m10.json", "null_m25.json", "null_m50.json"):
        summary = monte_carlo(load_scenario(name), methods=("remeasure",), reps=1000)
        rates[name] = summary.rejection_rate["remeasure"]
    elapsed = time.perf_counter() - start
    assert elapsed < 600.0, f"took {elapsed:.1f}s"
    for name, rate in rates.items():
        assert 0.035 <= rate <= 0.070, f"{name}: rejection {rate:.3f} outside [0.035, 0.070]"


def test_bootstrap_small_sample_control():
    """With 5 remeasured samples the bootstrap test keeps size in [0.02, 0.08]."""
    start = time.perf_counter()
    summary = monte_carlo(
        load_scenario("bootstrap_null_m5.json"),
        methods=("bootstrap",),
        reps=500,
        bootstrap_B=300,
    )
    elapsed = time.perf_counter() - start
    rate = summary.rejection_rate["bootstrap"]
    assert elapsed < 1200.0, f"took {elapsed:.1f}s"
    assert 0.02 <= rate <= 0.08, f"bootstrap rejection {rate:.3f} outside [0.02, 0.08]"


def test_mse_beats_batch2_and_ls():
    """Under strong confounding the estimator has smaller MSE than both baselines."""
    summary = monte_carlo(
        load_scenario("confounded_effect_m10.json"),
        methods=("remeasure", "batch2", "ls"),
        reps=1000,
    )
    mse = summary.mse
    assert mse["remeasure"] < mse["batch2"], (
        f"MSE {mse['remeasure']:.4f} not below batch2 {mse['batch2']:.4f}"
    )
    assert mse["remeasure"] < mse["ls"], (
        f"MSE {mse['remeasure']:.4f} not below ls {mse['ls']:.4f}"
    )


def test_baseline_inflation():
    """Ignoring the batch effect inflates null rejection past 0.5; LS past 0.10."""
    summary = monte_carlo(
        load_scenario("bootstrap_null_m5.json"),
        methods=("ignore", "ls"),
        reps=1000,
    )
    ls_rate = summary.rejection_rate["ls"]
    ignore_rate = summary.rejection_rate["ignore"]
    assert ls_rate > 0.10, f"ls rejection {ls_rate:.3f} not above 0.10"
    assert ignore_rate > 0.5, f"ignore rejection {ignore_rate:.3f} not above 0.5"


def test_published_remeasurement_counts():
    """The CLI reproduces the 35 (absolute) and 19 (relative) sample counts."""
    start = time.perf_counter()
    base = ["power", "--n1", "50", "--n2", "50", "--rho", "0.6", "--d", "0.6",
            "--alpha", "0.05", "--target", "0.8"]
    absolute = CliRunner().invoke(main, base + ["--mode", "absolute"])
    relative = CliRunner().invoke(main, base + ["--mode", "relative"])
    elapsed = time.perf_counter() - start
    assert absolute.exit_code == 0 and relative.exit_code == 0
    n_abs = json.loads(absolute.output)["n1_prime"]
    n_rel = json.loads(relative.output)["n1_prime"]
    assert abs(n_abs - 35) <= 2, f"absolute-mode count {n_abs} not within 35 +/- 2"
    assert abs(n_rel - 19) <= 2, f"relative-mode count {n_rel} not within 19 +/- 2"
    assert elapsed < 1.0, f"took {elapsed:.2f}s"


def test_theoretical_power_tracks_empirical():
    """Analytic power matches 1000-replicate rejection within 0.06."""
    for m in (25, 50):
        scenario = Scenario(
            design=StudyDesign(n1=50, n2=50, n1_prime=m, p=1),
            truth=ParameterVector(
                a0=0.5, a1=0.5, b=np.array([-0.5]), rho=0.9, sigma1=2.0, sigma2=1.0
            ),
            seed=300 + m,
        )
        empirical = monte_carlo(scenario, methods=("remeasure",), reps=1000)
        theory = theoretical_power(
            PowerQuery(n1=50, n2=50, n1_prime=m, effect=0.5, rho=0.9,
                       alpha=0.05, sigma1=2.0)
        ).absolute_power
        gap = abs(theory - empirical.rejection_rate["remeasure"])
        assert gap <= 0.06, f"m={m}: |theory - empirical| = {gap:.3f} > 0.06"


def test_variance_calibration():
    """Mean estimated variance is within 5% of the Monte Carlo variance over 10,000 fits."""
    scenario = load_scenario("null_m25.json")
    estimates = np.empty(10_000)
    variances = np.empty(10_000)
    for rep in range(10_000):
        data = generate_dataset(scenario, rep)
        fit = fit_mle(data)
        estimates[rep] = fit.theta.a0
        variances[rep] = variance_a0(data, fit).var_a0
    ratio = variances.mean() / estimates.var(ddof=1)
    assert abs(ratio - 1.0) <= 0.05, f"mean est. variance / MC variance = {ratio:.4f}"


def test_nongaussian_type_i_control():
    """Skewed and heavy-tailed noise keep null rejection at or below 0.09."""
    for name in ("null_gamma_m50.json", "null_t6_m50.json"):
        summary = monte_carlo(load_scenario(name), methods=("remeasure",), reps=1000)
        rate = summary.rejection_rate["remeasure"]
        assert rate <= 0.09, f"{name}: rejection {rate:.3f} above 0.09"


def test_compiled_speedup():
    """The update-loop fit is at least 5x faster than the generic optimizer."""
    datasets = [generate_dataset(REFERENCE_SCENARIO, rep) for rep in range(500)]
    fast_times, slow_times = [], []
    for data in datasets:
        t0 = time.perf_counter()
        fit_mle(data)
        fast_times.append(time.perf_counter() - t0)
    for data in datasets:
        t0 = time.perf_counter()
        fit_generic(data)
        slow_times.append(time.perf_counter() - t0)
    ratio = statistics.median(slow_times) / statistics.median(fast_times)
    assert ratio >= 5.0, f"speedup {ratio:.1f}x below 5x"
