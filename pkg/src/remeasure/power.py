"""Analytic power for the remeasured-controls design.

With sigma2 fixed at 1 the effect is Cohen's d. The sampling SD of the
effect estimate comes from the same block-weight representation used for
inference, evaluated on an intercept-only design with the true (rho,
sigma1, sigma2) plugged in. Power follows from the two-sided normal test:
power = Phi(-z_{1-alpha/2} + d/sd) + Phi(-z_{1-alpha/2} - d/sd).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from .inference import _c_vectors

__all__ = [
    "PowerQuery",
    "PowerResult",
    "oracle_sd_a0",
    "theoretical_power",
    "min_remeasured",
    "power_curve",
]


@dataclass(frozen=True)
class PowerQuery:
    """Design and effect inputs for the analytic power calculation.

    sigma2 is fixed at 1 so ``effect`` is Cohen's d; a1 is accepted for
    completeness but has no influence on power.
    """

    n1: int
    n2: int
    n1_prime: int
    effect: float
    rho: float
    alpha: float
    sigma1: float = 1.0
    a1: float = 0.0

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 2:
            raise ValueError("need n1 >= 1 and n2 >= 2")
        if not 0 <= self.n1_prime <= self.n1:
            raise ValueError("n1_prime must be in [0, n1]")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not abs(self.rho) < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        if self.sigma1 <= 0.0:
            raise ValueError("sigma1 must be > 0")
        if not math.isfinite(self.effect):
            raise ValueError("effect must be finite")


@dataclass(frozen=True)
class PowerResult:
    """Absolute power plus its ratio to the all-pairs optimum."""

    absolute_power: float
    optimal_power: float
    relative_power: float
    oracle_sd: float

    def __post_init__(self):
        if self.absolute_power > self.optimal_power + 1e-12:
            raise ValueError("absolute power cannot exceed the optimal power")
        if self.relative_power < 0.0:
            raise ValueError("relative power must be >= 0")


def oracle_sd_a0(query: PowerQuery) -> float:
    """SD of the effect estimate with known (rho, sigma1, sigma2=1)."""
    m, n1, n2 = query.n1_prime, query.n1, query.n2
    if m < 2:
        raise ValueError("correlation unidentifiable: need at least 2 remeasured samples")
    s1, s2, rho = query.sigma1, 1.0, query.rho
    c1, c2, c3, c4 = _c_vectors(
        np.ones((m, 1)), np.ones((n1 - m, 1)), np.ones((n2, 1)), rho, s1, s2
    )
    var = (
        s1**2 * (c1 @ c1 + c4 @ c4)
        + s2**2 * (c2 @ c2 + c3 @ c3)
        + 2.0 * rho * s1 * s2 * (c1 @ c3)
    )
    return float(np.sqrt(var))


def _absolute_power(d: float, sd: float, alpha: float) -> float:
    q = norm.ppf(1.0 - alpha / 2.0)
    return float(norm.cdf(-q + d / sd) + norm.cdf(-q - d / sd))


def theoretical_power(query: PowerQuery) -> PowerResult:
    """Absolute, optimal, and relative power of the two-sided level-alpha test."""
    sd = oracle_sd_a0(query)
    absolute = _absolute_power(query.effect, sd, query.alpha)
    sd_opt = oracle_sd_a0(replace(query, n1_prime=query.n1))
    optimal = _absolute_power(query.effect, sd_opt, query.alpha)
    return PowerResult(
        absolute_power=absolute,
        optimal_power=optimal,
        relative_power=absolute / optimal,
        oracle_sd=sd,
    )


def min_remeasured(query: PowerQuery, target: float, mode: str = "absolute"):
    """Smallest n1_prime in [2, n1] reaching the target power.

    In absolute mode, returns None when even remeasuring every control
    falls short of the target; relative power always reaches 1 at
    n1_prime = n1, so relative mode always returns a count.
    """
    if not 0.0 < target < 1.0:
        raise ValueError("target must lie in (0, 1)")
    if mode not in ("absolute", "relative"):
        raise ValueError("mode must be 'absolute' or 'relative'")
    for m, result in power_curve(query):
        value = result.absolute_power if mode == "absolute" else result.relative_power
        if value >= target:
            return m
    return None


def power_curve(query: PowerQuery, n1_prime_values=None):
    """Power at each candidate number of remeasured samples."""
    if n1_prime_values is None:
        n1_prime_values = range(2, query.n1 + 1)
    out = []
    for m in n1_prime_values:
        out.append((int(m), theoretical_power(replace(query, n1_prime=int(m)))))
    return out
