"""Dataset generation under the paired two-batch model and a Monte Carlo harness.

Errors come from one of three unit-variance families (gaussian, gamma(2,1)
centered and rescaled, Student t with 6 df rescaled) and are scaled to the
requested sigmas. Remeasured pairs are drawn jointly: exactly bivariate
normal in the Gaussian case, and through a common-shock mix
(sqrt(rho) W + sqrt(1-rho) U) otherwise, which hits correlation rho exactly
for rho >= 0. Replicates use independent seed streams derived from
(seed, replicate) so results never depend on scheduling.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import fit_batch2, fit_ignore, fit_ls, fit_lsind, fit_naive
from .estimator import FitConfig, fit_mle
from .inference import residual_bootstrap, variance_a0, z_test
from .model import Dataset, ParameterVector, StudyDesign, validate_dataset

__all__ = [
    "NOISE_FAMILIES",
    "METHODS",
    "Scenario",
    "MCSummary",
    "generate_dataset",
    "monte_carlo",
    "run_method",
    "scenario_from_json",
    "scenario_to_json",
]

NOISE_FAMILIES = ("gaussian", "centered_gamma", "student_t")
METHODS = ("remeasure", "bootstrap", "batch2", "ignore", "naive", "ls", "lsind")


@dataclass(frozen=True)
class Scenario:
    """Generative configuration: design, true parameters, noise, covariates."""

    design: StudyDesign
    truth: ParameterVector
    noise: str = "gaussian"
    covariate_gen: object = "standard_normal"
    seed: int = 0

    def __post_init__(self):
        if self.noise not in NOISE_FAMILIES:
            raise ValueError(f"noise must be one of {NOISE_FAMILIES}")
        if len(self.truth.b) != self.design.p:
            raise ValueError("truth.b must have length design.p")
        if self.noise != "gaussian" and self.truth.rho < 0:
            raise ValueError("negative rho requires gaussian noise (common-shock pairs need rho >= 0)")
        if not isinstance(self.covariate_gen, str):
            zmat = np.asarray(self.covariate_gen, dtype=float)
            n = self.design.n1 + self.design.n2
            if zmat.shape not in ((n, self.design.p), (n, self.design.p - 1)):
                raise ValueError("covariate matrix must have one row per original sample")
            object.__setattr__(self, "covariate_gen", zmat)
        elif self.covariate_gen != "standard_normal":
            raise ValueError("covariate_gen must be 'standard_normal' or a matrix")


@dataclass(frozen=True)
class MCSummary:
    """Per-method rejection rates, MSE, and estimate moments."""

    rejection_rate: dict
    mse: dict
    mean_estimate: dict
    sem_estimate: dict
    failures: dict
    replicates: int
    alpha: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([
                "method", "replicates", "failures", "rejection_rate",
                "mse", "mean_estimate", "sem_estimate",
            ])
            for method in sorted(self.rejection_rate):
                writer.writerow([
                    method,
                    self.replicates,
                    self.failures[method],
                    self.rejection_rate[method],
                    self.mse[method],
                    self.mean_estimate[method],
                    self.sem_estimate[method],
                ])


def _standard_draw(rng: np.random.Generator, family: str, size) -> np.ndarray:
    """Unit-variance, zero-mean draws from the requested family."""
    if family == "gaussian":
        return rng.standard_normal(size)
    if family == "centered_gamma":
        return (rng.gamma(2.0, 1.0, size) - 2.0) / math.sqrt(2.0)
    return rng.standard_t(6, size) / math.sqrt(1.5)


def generate_dataset(scenario: Scenario, replicate: int = 0) -> Dataset:
    """One validated dataset drawn from the scenario's replicate stream."""
    d = scenario.design
    th = scenario.truth
    rng = np.random.default_rng([scenario.seed, replicate])
    n, m = d.n1 + d.n2, d.n1_prime

    if isinstance(scenario.covariate_gen, str):
        z = np.column_stack([np.ones(n), rng.standard_normal((n, d.p - 1))])
    else:
        zmat = np.asarray(scenario.covariate_gen, dtype=float)
        z = zmat if zmat.shape[1] == d.p else np.column_stack([np.ones(n), zmat])

    rho = th.rho
    if scenario.noise == "gaussian":
        e1 = _standard_draw(rng, "gaussian", d.n1)
        e2_pair = rho * e1[:m] + math.sqrt(1.0 - rho * rho) * _standard_draw(rng, "gaussian", m)
    else:
        shock = _standard_draw(rng, scenario.noise, m)
        e1 = _standard_draw(rng, scenario.noise, d.n1)
        e1[:m] = math.sqrt(rho) * shock + math.sqrt(1.0 - rho) * e1[:m]
        e2_pair = math.sqrt(rho) * shock + math.sqrt(1.0 - rho) * _standard_draw(rng, scenario.noise, m)
    e_case = _standard_draw(rng, scenario.noise, d.n2)

    y1 = z[: d.n1] @ th.b + th.sigma1 * e1
    y_case = th.a0 + th.a1 + z[d.n1 :] @ th.b + th.sigma2 * e_case
    y2 = th.a1 + z[:m] @ th.b + th.sigma2 * e2_pair

    raw = Dataset(
        design=d,
        y=np.concatenate([y1, y_case, y2]),
        x=np.concatenate([np.zeros(d.n1), np.ones(d.n2), np.zeros(m)]).astype(int),
        batch=np.concatenate([np.ones(d.n1), 2 * np.ones(d.n2), 2 * np.ones(m)]).astype(int),
        z=np.vstack([z, z[:m]]),
        pair_index=np.arange(m),
    )
    return validate_dataset(d, raw)


def run_method(method: str, data: Dataset, bootstrap_B: int = 1000, bootstrap_seed=None):
    """Apply one named testing method to a dataset and return its TestResult."""
    if method == "remeasure":
        fit = fit_mle(data)
        return z_test(fit, variance_a0(data, fit))
    if method == "bootstrap":
        fit = fit_mle(data)
        return residual_bootstrap(data, fit, B=bootstrap_B, seed=bootstrap_seed)
    if method == "batch2":
        return fit_batch2(data)
    if method == "ignore":
        return fit_ignore(data)
    if method == "naive":
        return fit_naive(data)
    if method == "ls":
        return fit_ls(data)
    if method == "lsind":
        return fit_lsind(data)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def _replicate_results(args):
    scenario, methods, rep, bootstrap_B = args
    data = generate_dataset(scenario, rep)
    out = {}
    for method in methods:
        try:
            res = run_method(method, data, bootstrap_B, [scenario.seed, rep, 1])
            out[method] = (res.estimate, res.p_value)
        except ValueError:
            out[method] = None
    return rep, out


def monte_carlo(
    scenario: Scenario,
    methods=("remeasure",),
    reps: int = 1000,
    alpha: float = 0.05,
    bootstrap_B: int = 300,
    threads: int = 1,
) -> MCSummary:
    """Repeated-sampling performance of the requested methods.

    Each replicate regenerates data from its own seed stream, applies every
    method, and records the estimate and p-value; failures are counted per
    method and excluded from the summaries. Results are identical for any
    thread count because replicate streams are independent.
    """
    if reps < 1:
        raise ValueError("empty experiment: reps must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    methods = tuple(methods)
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; choose from {METHODS}")

    tasks = [(scenario, methods, rep, bootstrap_B) for rep in range(reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = dict(pool.map(_replicate_results, tasks, chunksize=max(1, reps // (8 * threads))))
    else:
        results = dict(map(_replicate_results, tasks))

    rejection, mse, mean_est, sem_est, failures = {}, {}, {}, {}, {}
    a0 = scenario.truth.a0
    for method in methods:
        rows = [results[rep][method] for rep in range(reps)]
        ok = [r for r in rows if r is not None]
        failures[method] = reps - len(ok)
        if failures[method] > 0.01 * reps:
            warnings.warn(
                f"{method}: {failures[method]}/{reps} replicates failed and were excluded",
                stacklevel=2,
            )
        if not ok:
            rejection[method] = mse[method] = mean_est[method] = sem_est[method] = float("nan")
            continue
        ests = np.array([e for e, _ in ok])
        pvals = np.array([p for _, p in ok])
        rejection[method] = float(np.mean(pvals < alpha))
        mse[method] = float(np.mean((ests - a0) ** 2))
        mean_est[method] = float(np.mean(ests))
        sem_est[method] = float(np.std(ests, ddof=1) / math.sqrt(len(ests)))
    return MCSummary(
        rejection_rate=rejection,
        mse=mse,
        mean_estimate=mean_est,
        sem_estimate=sem_est,
        failures=failures,
        replicates=reps,
        alpha=alpha,
    )


def scenario_to_json(scenario: Scenario) -> str:
    doc = {
        "design": {
            "n1": scenario.design.n1,
            "n2": scenario.design.n2,
            "n1_prime": scenario.design.n1_prime,
            "p": scenario.design.p,
        },
        "truth": {
            "a0": scenario.truth.a0,
            "a1": scenario.truth.a1,
            "b": list(np.asarray(scenario.truth.b, dtype=float)),
            "rho": scenario.truth.rho,
            "sigma1": scenario.truth.sigma1,
            "sigma2": scenario.truth.sigma2,
        },
        "noise": scenario.noise,
        "covariate_gen": (
            scenario.covariate_gen
            if isinstance(scenario.covariate_gen, str)
            else np.asarray(scenario.covariate_gen).tolist()
        ),
        "seed": scenario.seed,
    }
    return json.dumps(doc, indent=2)


def scenario_from_json(text: str) -> Scenario:
    doc = json.loads(text)
    design = StudyDesign(**doc["design"])
    truth = ParameterVector(
        a0=float(doc["truth"]["a0"]),
        a1=float(doc["truth"]["a1"]),
        b=np.asarray(doc["truth"]["b"], dtype=float),
        rho=float(doc["truth"]["rho"]),
        sigma1=float(doc["truth"]["sigma1"]),
        sigma2=float(doc["truth"]["sigma2"]),
    )
    return Scenario(
        design=design,
        truth=truth,
        noise=doc.get("noise", "gaussian"),
        covariate_gen=doc.get("covariate_gen", "standard_normal"),
        seed=int(doc.get("seed", 0)),
    )
