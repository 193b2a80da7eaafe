"""Variance of the effect estimate, asymptotic z-test, and residual bootstrap.

The effect estimate is a linear combination of the four response blocks once
the other parameters are held at their estimates; the variance follows from
that representation. The bootstrap rebuilds responses from fitted parameters
and resampled residuals, keeping each remeasured pair's residuals together so
the between-batch coupling survives resampling.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.stats import norm

from .estimator import FitConfig, fit_mle
from .model import Dataset, FitResult, _freeze, require_validated

__all__ = [
    "VarianceDecomposition",
    "TestResult",
    "variance_a0",
    "z_test",
    "residual_bootstrap",
]


@dataclass(frozen=True)
class VarianceDecomposition:
    """Weights turning the response blocks into the effect estimate.

    c1 weights the paired batch-1 controls, c2 the cases, c3 the remeasured
    controls, c4 the unpaired batch-1 controls; var_a0 is the implied
    sampling variance of the weighted sum.
    """

    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray
    c4: np.ndarray
    var_a0: float

    def __post_init__(self):
        if not (self.var_a0 > 0 and np.isfinite(self.var_a0)):
            raise ValueError("degenerate variance: var_a0 must be positive")


@dataclass(frozen=True)
class TestResult:
    """Two-sided test of a zero biological effect."""

    __test__ = False  # keep pytest from collecting this as a test class

    estimate: float
    stderr: float
    z: float
    p_value: float
    method: str
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p_value must lie in [0, 1]")


def _c_vectors(Z1, Zu, Zc, rho, s1, s2):
    """Block weight vectors for the effect estimate at fixed (rho, s1, s2).

    Uses the same profiled coefficient system as the b-update; the returned
    weights satisfy c1'y_S1 + c2'y_T2 + c3'y_C2 + c4'y_rest = a0_hat.
    """
    from .estimator import _assemble_system

    m = Z1.shape[0]
    n2 = Zc.shape[0]
    k = rho * s2 / s1
    f = 1.0 / (1.0 - rho * rho)
    zbar = Z1.mean(axis=0)
    S, _ = _assemble_system(
        Z1, Zu, Zc, np.zeros(m), np.zeros(Zu.shape[0]), np.zeros(n2), np.zeros(m), rho, s1, s2
    )
    g = (1.0 - k) * zbar - Zc.mean(axis=0)
    try:
        cho = scipy.linalg.cho_factor(S, lower=True)
    except scipy.linalg.LinAlgError as err:
        raise ValueError("design collinear under current weights") from err
    h = scipy.linalg.cho_solve(cho, g)

    w1 = Z1 @ h
    wc = Zc @ h
    alpha = f / s1**2
    beta = f * rho / (s1 * s2)
    gamma = f * rho * rho / s1**2
    c1 = alpha * w1 - beta * (w1 - w1.mean()) - gamma * w1.mean() + k / m
    c2 = (wc - wc.mean()) / s2**2 + 1.0 / n2
    c3 = (f / s2**2 - beta) * (w1 - w1.mean()) - 1.0 / m
    c4 = (Zu @ h) / s1**2
    return c1, c2, c3, c4


def variance_a0(data: Dataset, fit: FitResult) -> VarianceDecomposition:
    """Estimated variance of the effect estimate at the fitted parameters."""
    require_validated(data)
    if not fit.converged:
        raise ValueError("variance requires a converged fit")
    th = fit.theta
    c1, c2, c3, c4 = _c_vectors(
        data.z_pair1, data.z_unpaired, data.z_case, th.rho, th.sigma1, th.sigma2
    )
    var = (
        th.sigma1**2 * (c1 @ c1 + c4 @ c4)
        + th.sigma2**2 * (c2 @ c2 + c3 @ c3)
        + 2.0 * th.rho * th.sigma1 * th.sigma2 * (c1 @ c3)
    )
    return VarianceDecomposition(c1=c1, c2=c2, c3=c3, c4=c4, var_a0=float(var))


def z_test(fit: FitResult, var: VarianceDecomposition) -> TestResult:
    """Two-sided normal test of a zero effect."""
    estimate = fit.theta.a0
    stderr = float(np.sqrt(var.var_a0))
    z = estimate / stderr
    return TestResult(
        estimate=float(estimate),
        stderr=stderr,
        z=float(z),
        p_value=float(2.0 * norm.cdf(-abs(z))),
        method="remeasure",
    )


def residual_bootstrap(
    data: Dataset,
    fit: FitResult,
    B: int = 1000,
    seed=None,
    config: FitConfig | None = None,
) -> TestResult:
    """Bootstrap test of a zero effect from group-wise resampled residuals.

    Residuals are taken against the fitted model (batch-1 controls keep
    their covariate-only residuals; cases and remeasured rows also remove
    their location terms), then resampled with replacement: the remeasured
    pairs jointly as 2-vectors, the unpaired controls and the cases each
    within their own group. Each replicate rebuilds responses from the
    fitted parameters, refits, and records the studentized deviation of its
    effect estimate from the original. Failed refits are redrawn from the
    replicate's own stream, up to 10*B attempts overall.
    """
    require_validated(data)
    if not fit.converged:
        raise ValueError("bootstrap requires a converged fit")
    if B < 100:
        raise ValueError("B must be at least 100")
    config = config or FitConfig()
    if seed is None:
        seed = np.random.SeedSequence().entropy
    seed_key = tuple(int(s) for s in np.atleast_1d(np.asarray(seed, dtype=object)))

    d = data.design
    m, n1, n2 = d.n1_prime, d.n1, d.n2
    th = fit.theta
    base = z_test(fit, variance_a0(data, fit))

    zb1 = data.z_pair1 @ th.b
    zbu = data.z_unpaired @ th.b
    zbc = data.z_case @ th.b
    e_pair1 = data.y_pair1 - zb1
    e_pair2 = data.y_pair2 - th.a1 - zb1
    e_unpaired = data.y_unpaired - zbu
    e_case = data.y_case - th.a0 - th.a1 - zbc

    mu_case = th.a0 + th.a1 + zbc
    mu_pair2 = th.a1 + zb1

    z_stats = np.empty(B)
    failures = 0
    max_attempts = 10 * B
    attempts = 0
    for b in range(B):
        rng = np.random.default_rng((*seed_key, b))
        while True:
            if attempts >= max_attempts:
                raise ValueError("bootstrap instability: too many failed refits")
            attempts += 1
            idx_pair = rng.integers(0, m, size=m)
            idx_unpaired = rng.integers(0, n1 - m, size=n1 - m) if n1 > m else np.empty(0, int)
            idx_case = rng.integers(0, n2, size=n2)
            y_new = np.concatenate([
                zb1 + e_pair1[idx_pair],
                zbu + e_unpaired[idx_unpaired],
                mu_case + e_case[idx_case],
                mu_pair2 + e_pair2[idx_pair],
            ])
            data_b = dataclasses.replace(data, y=_freeze(y_new))
            try:
                fit_b = fit_mle(data_b, config, warm_start=th)
                if not fit_b.converged:
                    raise ValueError("refit did not converge")
                var_b = variance_a0(data_b, fit_b)
            except ValueError:
                failures += 1
                continue
            z_stats[b] = (fit_b.theta.a0 - th.a0) / np.sqrt(var_b.var_a0)
            break

    p = float(np.count_nonzero(np.abs(z_stats) > abs(base.z)) / B)
    return TestResult(
        estimate=base.estimate,
        stderr=base.stderr,
        z=base.z,
        p_value=p,
        method="remeasure-bootstrap",
        extra={"replicates": B, "failed_refits": failures},
    )
