"""Comparison procedures that sidestep the paired likelihood.

Batch2 uses only the second batch; Ignore pools the original samples and
ignores the batch split; naive adds a batch indicator over all rows; LS and
LSind rescale the batch-1 controls to match the batch-2 moments before a
pooled regression. All five reduce to ordinary least squares with a
homoscedastic t-test on the group coefficient.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import t as student_t

from .inference import TestResult
from .model import Dataset, require_validated

__all__ = ["fit_batch2", "fit_ignore", "fit_naive", "fit_ls", "fit_lsind"]


def _ols_ttest(X: np.ndarray, y: np.ndarray, coef: int, method: str) -> TestResult:
    """OLS fit with a two-sided t-test on one coefficient."""
    n, k = X.shape
    gram = X.T @ X
    sv = np.linalg.svd(X, compute_uv=False)
    if n <= k or sv[-1] < 1e-10 * sv[0]:
        raise ValueError("rank deficient: baseline regression is not identifiable")
    beta = np.linalg.solve(gram, X.T @ y)
    resid = y - X @ beta
    dof = n - k
    s2 = float(resid @ resid) / dof
    se = float(np.sqrt(s2 * np.linalg.inv(gram)[coef, coef]))
    est = float(beta[coef])
    if se == 0.0:
        raise ValueError("degenerate variance: zero residual variance")
    tstat = est / se
    return TestResult(
        estimate=est,
        stderr=se,
        z=float(tstat),
        p_value=float(2.0 * student_t.sf(abs(tstat), dof)),
        method=method,
        extra={"dof": dof},
    )


def fit_batch2(data: Dataset) -> TestResult:
    """OLS over the second batch only (cases vs remeasured controls)."""
    require_validated(data)
    d = data.design
    if d.n1_prime < 1:
        raise ValueError("no controls in batch 2")
    X = np.column_stack([
        np.r_[np.ones(d.n2), np.zeros(d.n1_prime)],
        np.vstack([data.z_case, data.z_pair2]),
    ])
    y = np.r_[data.y_case, data.y_pair2]
    return _ols_ttest(X, y, 0, "batch2")


def fit_ignore(data: Dataset) -> TestResult:
    """OLS over the original samples with the batch split ignored."""
    require_validated(data)
    d = data.design
    X = np.column_stack([
        np.r_[np.zeros(d.n1), np.ones(d.n2)],
        data.z[: d.n1 + d.n2],
    ])
    y = data.y[: d.n1 + d.n2]
    return _ols_ttest(X, y, 0, "ignore")


def fit_naive(data: Dataset) -> TestResult:
    """OLS over every row with a batch indicator but no pairing."""
    require_validated(data)
    d = data.design
    if d.n1_prime < 1:
        raise ValueError("x and batch collinear: naive model needs remeasured controls")
    X = np.column_stack([
        data.x.astype(float),
        (data.batch == 2).astype(float),
        data.z,
    ])
    return _ols_ttest(X, data.y, 0, "naive")


def _ls_like(data: Dataset, sd1_source: np.ndarray, method: str) -> TestResult:
    d = data.design
    if d.n1_prime < 2:
        raise ValueError("rank deficient: moment matching needs at least 2 remeasured samples")
    y_c1 = data.y[: d.n1]
    sd1 = float(np.std(sd1_source, ddof=1))
    sd2 = float(np.std(data.y_pair2, ddof=1))
    if sd1 <= 0.0 or sd2 <= 0.0:
        raise ValueError("degenerate variance: zero sample SD in moment matching")
    shift = float(data.y_pair2.mean() - data.y_pair1.mean())
    y_star = (sd2 / sd1) * (y_c1 - y_c1.mean()) + y_c1.mean() + shift
    X = np.column_stack([
        np.r_[np.zeros(d.n1), np.ones(d.n2)],
        data.z[: d.n1 + d.n2],
    ])
    y = np.r_[y_star, data.y_case]
    return _ols_ttest(X, y, 0, method)


def fit_ls(data: Dataset) -> TestResult:
    """Moment matching with the scale ratio taken from the remeasured pairs."""
    require_validated(data)
    return _ls_like(data, data.y_pair1, "ls")


def fit_lsind(data: Dataset) -> TestResult:
    """Moment matching with the batch-1 scale taken from all controls."""
    require_validated(data)
    if data.design.n1 < 2:
        raise ValueError("rank deficient: batch-1 scale needs at least 2 controls")
    return _ls_like(data, data.y[: data.design.n1], "lsind")
