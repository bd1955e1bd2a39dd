"""Outlier detection with exact selection events.

Each detector returns both the retained index set and a SelectionEvent
describing, as quadratic (or affine) constraints on the response, the
set of response vectors that would have produced the same detection
outcome.  Cook's distance and DFFITS yield one quadratic constraint per
observation; the soft-IPOD lasso yields the affine KKT description of
its active set and signs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericalError, ValidationError
from .geometry import QuadraticConstraint, SelectionEvent, affine_constraint
from .linalg import Dataset, fit_ols

SOFT_IPOD_TOL = 1e-10        # max coordinate change at convergence
SOFT_IPOD_MAX_ITER = 100_000
SOFT_IPOD_KKT_TOL = 1e-8
SUBGRADIENT_BOUNDARY_TOL = 1e-10


@dataclass(frozen=True)
class DetectionConfig:
    """Method tag plus its cutoff: Cook's threshold factor lambda (the
    rule is D_i >= lambda/n), absolute DFFITS threshold, or the soft-IPOD
    penalty level."""

    method: str
    cutoff: float

    def __post_init__(self):
        if self.method not in ("cooks", "dffits", "softipod"):
            raise ValidationError(f"unknown detection method {self.method!r}")
        if not (np.isfinite(self.cutoff) and self.cutoff > 0):
            raise ValidationError("cutoff must be positive and finite")


@dataclass(frozen=True)
class DetectionResult:
    method: str
    cutoff: float
    non_outliers: np.ndarray      # sorted 0-based indices
    outliers: np.ndarray
    event: SelectionEvent
    scores: np.ndarray            # D_i, |DFFITS_i| or |u_i| per observation
    signs: Optional[np.ndarray] = None   # soft-IPOD active signs


def detect(data: Dataset, config: DetectionConfig) -> DetectionResult:
    if config.method == "cooks":
        return detect_cooks(data, config.cutoff)
    if config.method == "dffits":
        return detect_dffits(data, config.cutoff)
    beta, u = solve_soft_ipod(data, config.cutoff)
    return soft_ipod_event(data, config.cutoff, u)


def _full_fit_pieces(data: Dataset):
    fit = fit_ols(data)
    q = fit.hat_basis()
    resid = np.zeros(data.n)
    resid[fit.subset] = fit.residuals
    lev = fit.leverage
    # columns of the residual projector, used as rank-one event directions
    perp_cols = np.eye(data.n) - q @ q.T
    return fit, q, resid, lev, perp_cols


def detect_cooks(data: Dataset, cutoff: float) -> DetectionResult:
    """Flag observation i when its Cook's distance reaches cutoff/n.

    Boundary ties count as outliers (the complement rule is
    D_i >= cutoff/n); the tie set has measure zero under the model.
    """
    if cutoff <= 0:
        raise ValidationError("cutoff must be positive")
    n, p = data.n, data.p
    fit, q, resid, lev, perp_cols = _full_fit_pieces(data)
    d = resid**2 / (p * fit.sigma_sq) * lev / (1.0 - lev) ** 2
    keep = d < cutoff / n
    _check_enough_rows(keep, p)

    sgn = np.where(keep, 1.0, -1.0)
    constraints = [
        QuadraticConstraint(
            proj_coef=sgn[i] * (cutoff * p / n) * (1.0 - lev[i]) ** 2,
            basis=q,
            rank1=perp_cols[i][None, :],
            rank1_coefs=np.array([-sgn[i] * (n - p) * lev[i]]),
        )
        for i in range(n)
    ]
    event = SelectionEvent.intersection(constraints)
    _check_self_membership(event, data.y)
    return DetectionResult(
        method="cooks",
        cutoff=float(cutoff),
        non_outliers=np.flatnonzero(keep),
        outliers=np.flatnonzero(~keep),
        event=event,
        scores=d,
    )


def detect_dffits(data: Dataset, threshold: float) -> DetectionResult:
    """Flag observation i when |DFFITS_i| reaches the threshold.

    DFFITS uses the externally studentized scale s_(i); the event stores
    each comparison with denominators cleared, which leaves one quadratic
    constraint in y per observation.
    """
    if threshold <= 0:
        raise ValidationError("threshold must be positive")
    n, p = data.n, data.p
    if n - p - 1 < 1:
        raise ValidationError("need n - p - 1 >= 1 for the studentized scale")
    fit, q, resid, lev, perp_cols = _full_fit_pieces(data)
    rss = fit.sigma_sq * (n - p)
    s2_loo = (rss - resid**2 / (1.0 - lev)) / (n - p - 1)
    if np.any(s2_loo <= 0):
        raise NumericalError("leave-one-out variance became non-positive")
    dffits = resid * np.sqrt(lev) / (np.sqrt(s2_loo) * (1.0 - lev))
    keep = dffits**2 < threshold**2
    _check_enough_rows(keep, p)

    c2 = threshold**2
    sgn = np.where(keep, 1.0, -1.0)
    constraints = [
        QuadraticConstraint(
            proj_coef=sgn[i] * c2 * (1.0 - lev[i]) ** 2,
            basis=q,
            rank1=perp_cols[i][None, :],
            rank1_coefs=np.array(
                [-sgn[i] * (c2 * (1.0 - lev[i]) + (n - p - 1) * lev[i])]
            ),
        )
        for i in range(n)
    ]
    event = SelectionEvent.intersection(constraints)
    _check_self_membership(event, data.y)
    return DetectionResult(
        method="dffits",
        cutoff=float(threshold),
        non_outliers=np.flatnonzero(keep),
        outliers=np.flatnonzero(~keep),
        event=event,
        scores=np.abs(dffits),
    )


def solve_soft_ipod(data: Dataset, lam: float) -> tuple:
    """Minimize (1/2n)||y - X b - u||^2 + lam*||u||_1 over (b, u).

    Alternating minimization: exact OLS in b, elementwise soft threshold
    at level n*lam in u.  Returns (beta, u); raises on hitting the
    iteration cap or on a KKT residual above SOFT_IPOD_KKT_TOL.
    """
    if lam <= 0:
        raise ValidationError("penalty level must be positive")
    n = data.n
    full_fit = fit_ols(data)
    q = full_fit.hat_basis()
    y = data.y
    thresh = n * lam
    u = np.zeros(n)
    for _ in range(SOFT_IPOD_MAX_ITER):
        w = y - u
        fitted = q @ (q.T @ w)
        r = y - fitted
        u_new = np.sign(r) * np.maximum(np.abs(r) - thresh, 0.0)
        delta = np.max(np.abs(u_new - u))
        u = u_new
        if delta <= SOFT_IPOD_TOL:
            break
    else:
        raise NumericalError(
            f"soft-IPOD did not converge within {SOFT_IPOD_MAX_ITER} iterations"
        )
    w = y - u
    beta = full_fit.pseudoinverse() @ w  # X^+ (y - u)
    r = y - data.X @ beta - u
    active = u != 0.0
    kkt = np.where(
        active,
        np.abs(r - thresh * np.sign(u)),
        np.maximum(np.abs(r) - thresh, 0.0),
    )
    resid_kkt = float(np.max(kkt)) if n else 0.0
    if resid_kkt > SOFT_IPOD_KKT_TOL * max(1.0, thresh):
        raise NumericalError(f"soft-IPOD KKT residual {resid_kkt:.2e} too large")
    return beta, u


def soft_ipod_event(data: Dataset, lam: float, u: np.ndarray) -> DetectionResult:
    """Affine selection event for the observed soft-IPOD support and signs.

    Conditioning is on (support, signs) of u — finer than {M_hat = M},
    which only costs extra conditioning, never validity.  Derived from
    the profiled problem min_u (1/2n)||P_perp(y - u)||^2 + lam*||u||_1:
    on the event, u_A(y) = K^{-1}((P_perp y)_A - n lam s_A) with
    K = (P_perp)_{A,A}, so active coordinates keep their signs and
    inactive subgradients stay inside [-1, 1].
    """
    n = data.n
    u = np.asarray(u, dtype=float)
    q = fit_ols(data).hat_basis()
    perp = np.eye(n) - q @ q.T
    active = np.flatnonzero(u != 0.0)
    inactive = np.flatnonzero(u == 0.0)
    signs = np.sign(u[active])
    thresh = n * lam

    constraints = []
    if active.size:
        K = perp[np.ix_(active, active)]
        if np.linalg.cond(K) > 1e12:
            raise NumericalError(
                "active block of the residual projector is numerically singular"
            )
        Kinv = np.linalg.inv(K)
        rows_a = perp[active]                 # (P_perp)_{A,.}
        G = Kinv @ rows_a                     # u_A(y) = G y - thresh * Kinv s
        offset = -thresh * (Kinv @ signs)
        for j in range(active.size):
            constraints.append(
                affine_constraint(signs[j] * G[j], signs[j] * offset[j])
            )
        # (P_perp (y - u))_i = rows_i y - P_{i,A} u_A(y)
        rows_i = perp[inactive]
        cross = perp[np.ix_(inactive, active)]
        lin = rows_i - cross @ G
        off = -cross @ offset
    else:
        lin = perp[inactive]
        off = np.zeros(inactive.size)

    gamma = (lin @ data.y + off) / thresh
    if np.any(np.abs(np.abs(gamma) - 1.0) <= SUBGRADIENT_BOUNDARY_TOL):
        raise NumericalError(
            "soft-IPOD subgradient sits exactly on the boundary; the "
            "selection event is degenerate at this observation"
        )
    for j in range(inactive.size):
        constraints.append(affine_constraint(-lin[j], thresh - off[j]))
        constraints.append(affine_constraint(lin[j], thresh + off[j]))

    event = SelectionEvent.intersection(constraints)
    _check_self_membership(event, data.y)
    return DetectionResult(
        method="softipod",
        cutoff=float(lam),
        non_outliers=inactive,
        outliers=active,
        event=event,
        scores=np.abs(u),
        signs=signs if active.size else np.zeros(0),
    )


def _check_enough_rows(keep: np.ndarray, p: int) -> None:
    if int(keep.sum()) <= p:
        raise ValidationError(
            f"too many outliers removed for inference: kept {int(keep.sum())} "
            f"rows with p={p}"
        )


def _check_self_membership(event: SelectionEvent, y: np.ndarray) -> None:
    # the observed response must satisfy its own selection event
    if not event.contains(y, tol=1e-9 * max(1.0, float(y @ y))):
        raise NumericalError(
            "constructed selection event rejects the observed response; "
            "this indicates a detection/event inconsistency"
        )
