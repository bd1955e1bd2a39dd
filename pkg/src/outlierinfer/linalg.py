"""Dense OLS machinery: datasets, fits, leverages, projections.

Fits go through column-pivoted QR rather than the normal equations;
leverage values get squared inside downstream constraint matrices, so
the better conditioning matters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import ValidationError

# Relative rank tolerance (against the largest singular value).
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class Dataset:
    """Response vector plus full-column-rank design matrix.

    `has_intercept` flags an all-ones first column; it only affects how
    total sums of squares and sigma estimation treat the design.
    """

    y: np.ndarray
    X: np.ndarray
    column_names: tuple
    has_intercept: bool = False

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def validate_dataset(
    columns: Mapping[str, Sequence],
    response: str,
    intercept: bool = True,
) -> Dataset:
    """Assemble and check a Dataset from named columns.

    Prepends an intercept column when requested, coerces everything to
    float, and verifies shape, finiteness and numerical column rank.
    """
    if response not in columns:
        raise ValidationError(f"response column {response!r} not found")
    names = [c for c in columns if c != response]
    try:
        y = np.asarray(columns[response], dtype=float)
        cols = [np.asarray(columns[c], dtype=float) for c in names]
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"non-numeric cell: {exc}") from exc
    if y.ndim != 1:
        raise ValidationError("response must be one-dimensional")
    n = y.shape[0]
    for name, c in zip(names, cols):
        if c.shape != (n,):
            raise ValidationError(f"column {name!r} has length {c.shape}, expected {n}")
    if intercept:
        cols = [np.ones(n)] + cols
        names = ["intercept"] + names
    if not cols:
        raise ValidationError("design matrix has no columns")
    X = np.column_stack(cols)
    return make_dataset(y, X, tuple(names), has_intercept=intercept)


def make_dataset(
    y: np.ndarray, X: np.ndarray, column_names=None, has_intercept: bool = False
) -> Dataset:
    """Validate raw arrays into a Dataset (rank, finiteness, n > p)."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValidationError("y and X have inconsistent shapes")
    n, p = X.shape
    if not (n > p >= 1):
        raise ValidationError(f"need n > p >= 1, got n={n}, p={p}")
    if not np.isfinite(y).all() or not np.isfinite(X).all():
        raise ValidationError("non-finite entries in data")
    sv = np.linalg.svd(X, compute_uv=False)
    if sv[-1] <= RANK_RTOL * sv[0]:
        raise ValidationError(
            f"design matrix is rank deficient (smallest/largest singular "
            f"value = {sv[-1] / sv[0]:.2e})"
        )
    if column_names is None:
        column_names = tuple(f"x{j}" for j in range(p))
    if len(column_names) != p:
        raise ValidationError("column_names length does not match p")
    return Dataset(y=y, X=X, column_names=tuple(column_names), has_intercept=has_intercept)


def orthonormal_basis(A: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the column space of A (must be full rank)."""
    Q, R, _ = scipy.linalg.qr(A, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if A.shape[1] and d[-1] <= RANK_RTOL * max(d[0], 1e-300):
        raise ValidationError("matrix lost full column rank")
    return Q


@dataclass(frozen=True)
class OlsFit:
    """OLS fit on a row subset M, with leverages and scale estimates.

    sigma_sq is the scaled sum of squares RSS/(|M|-p); sigma_refit is its
    square root (the classical refit scale, not a trustworthy estimate of
    the noise level once rows were removed by looking at the data).
    """

    subset: np.ndarray            # sorted row indices into the parent data
    coefficients: np.ndarray
    residuals: np.ndarray         # per fitted row
    leverage: np.ndarray          # hat-matrix diagonal per fitted row
    sigma_refit: float
    sigma_sq: float
    adjusted_r2: float
    _q: np.ndarray = field(repr=False)        # thin orthonormal basis of X_M
    _pinv: np.ndarray = field(repr=False)     # p x |M| pseudoinverse of X_M

    @property
    def m(self) -> int:
        return self.subset.shape[0]

    @property
    def p(self) -> int:
        return self.coefficients.shape[0]

    def hat_basis(self) -> np.ndarray:
        """Thin orthonormal basis of the fitted design's column space."""
        return self._q

    def pseudoinverse(self) -> np.ndarray:
        """Moore-Penrose pseudoinverse of X_M (p x |M|)."""
        return self._pinv


def fit_ols(data: Dataset, subset=None) -> OlsFit:
    """Least squares on the rows in `subset` (all rows when None).

    Column-pivoted QR; raises when |M| <= p or the row-deleted design
    loses rank.
    """
    n, p = data.n, data.p
    if subset is None:
        M = np.arange(n)
    else:
        M = np.unique(np.asarray(subset, dtype=int))
        if M.size and (M[0] < 0 or M[-1] >= n):
            raise ValidationError("subset indices out of range")
    m = M.shape[0]
    if m <= p:
        raise ValidationError(
            f"too many rows removed for inference: |M|={m} <= p={p}"
        )
    Xm = data.X[M]
    ym = data.y[M]

    Q, R, piv = scipy.linalg.qr(Xm, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d[-1] <= RANK_RTOL * max(d[0], 1e-300):
        raise ValidationError("design lost full column rank after row deletion")
    beta_piv = scipy.linalg.solve_triangular(R, Q.T @ ym)
    beta = np.empty(p)
    beta[piv] = beta_piv
    resid = ym - Xm @ beta
    lev = np.sum(Q * Q, axis=1)

    rss = float(resid @ resid)
    sigma_sq = rss / (m - p)
    tss = float(np.sum((ym - ym.mean()) ** 2)) if data.has_intercept else float(ym @ ym)
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    adj = 1.0 - (1.0 - r2) * (m - 1) / (m - p)

    # X_M^+ = P(R^-1 Q^T) undoing the column pivot
    rinv_qt = scipy.linalg.solve_triangular(R, Q.T)
    pinv = np.empty((p, m))
    pinv[piv] = rinv_qt

    return OlsFit(
        subset=M,
        coefficients=beta,
        residuals=resid,
        leverage=lev,
        sigma_refit=float(np.sqrt(sigma_sq)),
        sigma_sq=sigma_sq,
        adjusted_r2=adj,
        _q=Q,
        _pinv=pinv,
    )
