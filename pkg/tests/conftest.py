"""Shared dataset builders for the test suite.

The generator here is intentionally independent of remeasure.simulate so
that simulate's own tests have a second implementation to check against.
"""
import numpy as np
import pytest

from remeasure import Dataset, StudyDesign, validate_dataset


def gaussian_dataset(
    seed,
    n1=50,
    n2=50,
    n1_prime=25,
    rho=0.6,
    sigma1=2.0,
    sigma2=1.0,
    a0=0.5,
    a1=0.5,
    b=None,
    p_extra=1,
):
    """Draw one dataset from the paired two-batch model with Gaussian errors.

    Covariates are an intercept plus p_extra standard-normal columns; the
    remeasured rows reuse the covariates of the first n1_prime controls.
    """
    rng = np.random.default_rng(seed)
    b = np.r_[0.0, np.full(p_extra, -0.5)] if b is None else np.asarray(b, dtype=float)
    z_extra = rng.standard_normal((n1 + n2, p_extra))
    z = np.column_stack([np.ones(n1 + n2), z_extra])
    e1 = rng.standard_normal(n1) * sigma1
    e2_pair = sigma2 * (rho * e1[:n1_prime] / sigma1
                        + np.sqrt(1.0 - rho**2) * rng.standard_normal(n1_prime))
    e_case = rng.standard_normal(n2) * sigma2
    y1 = z[:n1] @ b + e1
    y_case = a0 + a1 + z[n1:] @ b + e_case
    y2 = a1 + z[:n1_prime] @ b + e2_pair
    design = StudyDesign(n1=n1, n2=n2, n1_prime=n1_prime, p=1 + p_extra)
    raw = Dataset(
        design=design,
        y=np.concatenate([y1, y_case, y2]),
        x=np.concatenate([np.zeros(n1), np.ones(n2), np.zeros(n1_prime)]).astype(int),
        batch=np.concatenate([np.ones(n1), 2 * np.ones(n2), 2 * np.ones(n1_prime)]).astype(int),
        z=np.vstack([z, z[:n1_prime]]),
        pair_index=np.arange(n1_prime),
    )
    return validate_dataset(design, raw)


@pytest.fixture
def dataset():
    return gaussian_dataset(0)


@pytest.fixture
def small_dataset():
    return gaussian_dataset(7, n1=12, n2=10, n1_prime=6)
