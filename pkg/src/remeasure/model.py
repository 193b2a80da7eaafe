"""Domain types for two-batch case-control studies with remeasured controls.

A study measures n1 controls in batch 1 and n2 cases in batch 2; the first
n1_prime controls are measured a second time in batch 2. Group and batch are
otherwise fully confounded, so the remeasured rows are the only link between
the batches. Datasets are stored in a canonical block order: paired batch-1
controls, unpaired batch-1 controls, cases, then the batch-2 remeasurements
(aligned row-for-row with the first block).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

RANK_TOL = 1e-10


@dataclass(frozen=True)
class StudyDesign:
    """Sample counts and covariate dimension of the confounded design."""

    n1: int
    n2: int
    n1_prime: int
    p: int

    def __post_init__(self):
        if self.n1 < 1:
            raise ValueError("n1 must be >= 1")
        if self.n2 < 2:
            raise ValueError("n2 must be >= 2")
        if not 0 <= self.n1_prime <= self.n1:
            raise ValueError("n1_prime must be in [0, n1]")
        if self.p < 1:
            raise ValueError("p must be >= 1 (intercept column)")

    @property
    def n_rows(self) -> int:
        return self.n1 + self.n2 + self.n1_prime


@dataclass(frozen=True)
class Dataset:
    """Responses, labels, covariates, and the original/remeasured pairing.

    ``pair_index[i]`` is the row index of the batch-1 original of the i-th
    remeasured row. In canonical order the remeasured block sits at rows
    [n1+n2, n1+n2+n1_prime) and ``pair_index == arange(n1_prime)``.
    """

    design: StudyDesign
    y: np.ndarray
    x: np.ndarray
    batch: np.ndarray
    z: np.ndarray
    pair_index: np.ndarray
    validated: bool = field(default=False, compare=False)

    # block views (canonical order only)
    @property
    def y_pair1(self) -> np.ndarray:
        return self.y[: self.design.n1_prime]

    @property
    def y_unpaired(self) -> np.ndarray:
        return self.y[self.design.n1_prime : self.design.n1]

    @property
    def y_case(self) -> np.ndarray:
        return self.y[self.design.n1 : self.design.n1 + self.design.n2]

    @property
    def y_pair2(self) -> np.ndarray:
        return self.y[self.design.n1 + self.design.n2 :]

    @property
    def z_pair1(self) -> np.ndarray:
        return self.z[: self.design.n1_prime]

    @property
    def z_unpaired(self) -> np.ndarray:
        return self.z[self.design.n1_prime : self.design.n1]

    @property
    def z_case(self) -> np.ndarray:
        return self.z[self.design.n1 : self.design.n1 + self.design.n2]

    @property
    def z_pair2(self) -> np.ndarray:
        return self.z[self.design.n1 + self.design.n2 :]


@dataclass(frozen=True)
class ParameterVector:
    """Full model parameter theta = (a0, a1, b, rho, sigma1, sigma2)."""

    a0: float
    a1: float
    b: np.ndarray
    rho: float
    sigma1: float
    sigma2: float

    def __post_init__(self):
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, dtype=float)))
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("sigma1 and sigma2 must be > 0")
        if not abs(self.rho) < 1:
            raise ValueError("rho must lie in (-1, 1)")
        if not np.all(np.isfinite(self.b)):
            raise ValueError("b must be finite")

    def to_array(self) -> np.ndarray:
        """Flat layout (a0, a1, b..., rho, sigma1, sigma2)."""
        return np.concatenate([[self.a0, self.a1], self.b, [self.rho, self.sigma1, self.sigma2]])

    @classmethod
    def from_array(cls, arr: np.ndarray, p: int) -> "ParameterVector":
        arr = np.asarray(arr, dtype=float)
        return cls(
            a0=float(arr[0]),
            a1=float(arr[1]),
            b=arr[2 : 2 + p].copy(),
            rho=float(arr[2 + p]),
            sigma1=float(arr[3 + p]),
            sigma2=float(arr[4 + p]),
        )


@dataclass(frozen=True)
class FitResult:
    """Converged estimate with its log-likelihood and iteration diagnostics."""

    theta: ParameterVector
    loglik: float
    iterations: int
    converged: bool
    loglik_trace: np.ndarray = field(default=None, repr=False, compare=False)
    max_score: float = field(default=np.nan, compare=False)
    backend: str = field(default="", compare=False)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def validate_dataset(design: StudyDesign, data: Dataset) -> Dataset:
    """Reorder a raw dataset into canonical block order and verify invariants.

    Accepts rows in any order. Each row must be a batch-1 control (x=0,
    batch=1), a batch-2 case (x=1, batch=2), or a batch-2 remeasured control
    (x=0, batch=2). ``data.pair_index`` maps each remeasured row, in row
    order, to the raw row index of its batch-1 original. The covariate matrix
    may omit the leading all-ones column (then z has p-1 columns and the
    intercept is prepended). Raises ValueError on any violated invariant.
    """
    y = np.asarray(data.y, dtype=float)
    x = np.asarray(data.x, dtype=int)
    batch = np.asarray(data.batch, dtype=int)
    z = np.asarray(data.z, dtype=float)
    pair_index = np.asarray(data.pair_index, dtype=int)
    if z.ndim == 1:
        z = z[:, None]

    n_rows = design.n_rows
    if not (len(y) == len(x) == len(batch) == z.shape[0] == n_rows):
        raise ValueError(f"expected {n_rows} rows consistent across y, x, batch, z")
    if len(pair_index) != design.n1_prime:
        raise ValueError("pair_index length must equal n1_prime")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(z)):
        raise ValueError("y and z must be finite (no NaN/inf)")
    if not np.isin(x, (0, 1)).all():
        raise ValueError("x must be 0 (control) or 1 (case)")
    if not np.isin(batch, (1, 2)).all():
        raise ValueError("batch must be 1 or 2")

    ctrl1 = np.flatnonzero((x == 0) & (batch == 1))
    case2 = np.flatnonzero((x == 1) & (batch == 2))
    re2 = np.flatnonzero((x == 0) & (batch == 2))
    if len(np.flatnonzero((x == 1) & (batch == 1))):
        raise ValueError("cases must be measured in batch 2 only")
    if len(ctrl1) != design.n1 or len(case2) != design.n2 or len(re2) != design.n1_prime:
        raise ValueError(
            f"row counts (controls={len(ctrl1)}, cases={len(case2)}, remeasured={len(re2)}) "
            f"do not match design ({design.n1}, {design.n2}, {design.n1_prime})"
        )

    if len(np.unique(pair_index)) != len(pair_index):
        raise ValueError("duplicate pair indices")
    if not np.isin(pair_index, ctrl1).all():
        raise ValueError("pair_index must reference batch-1 control rows")

    if z.shape[1] == design.p - 1:
        z = np.column_stack([np.ones(n_rows), z])
    elif z.shape[1] == design.p:
        if not np.all(z[:, 0] == 1.0):
            raise ValueError("first covariate column must be the intercept (all ones)")
    else:
        raise ValueError(f"covariate matrix has {z.shape[1]} columns, expected {design.p} or {design.p - 1}")

    # canonical order: paired originals, remaining controls, cases, remeasurements
    unpaired = ctrl1[~np.isin(ctrl1, pair_index)]
    order = np.concatenate([pair_index, unpaired, case2, re2]).astype(int)

    y, x, batch, z = y[order], x[order], batch[order], z[order]
    m = design.n1_prime
    if m and not np.array_equal(z[: m], z[design.n1 + design.n2 :]):
        raise ValueError("pair covariate mismatch: remeasured rows must repeat their original covariates")

    sv = np.linalg.svd(z, compute_uv=False)
    if sv[-1] < RANK_TOL * sv[0]:
        raise ValueError("covariate matrix is rank deficient")

    return Dataset(
        design=design,
        y=_freeze(y),
        x=_freeze(x),
        batch=_freeze(batch),
        z=_freeze(z),
        pair_index=_freeze(np.arange(m)),
        validated=True,
    )


def require_validated(data: Dataset) -> Dataset:
    if not data.validated:
        raise ValueError("dataset must pass validate_dataset first")
    return data
