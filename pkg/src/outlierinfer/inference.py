"""Selective and naive inference for linear models after outlier removal.

Known-sigma targets nu'mu (single coefficients, regression surface) go
through the truncated normal; group nulls go through the truncated
chi-squared; the unknown-sigma route is the truncated F test.  Naive
"detect and forget" baselines (classical t / F on the retained rows) are
provided for comparison, along with the augmented-lasso estimate of the
noise scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special, stats

from .errors import NumericalError, ValidationError
from .geometry import (
    SelectionEvent,
    slice_event_on_f_curve,
    slice_event_on_line,
)
from .intervals import IntervalSet
from .linalg import Dataset, OlsFit, orthonormal_basis
from .truncated import TruncatedChi2, TruncatedF, TruncatedNormal, tn_mean_solve

CI_SEARCH_LIMIT = 1e6     # CI endpoints beyond this multiple of sigma*|nu|
                          # are treated as a numerical failure
PREDICTION_GRID = 50


def two_sided(p: float) -> float:
    """Two-sided transform 2*min(p, 1-p) of a one-sided p-value."""
    return 2.0 * min(p, 1.0 - p)


# -- contrasts ---------------------------------------------------------------


@dataclass(frozen=True)
class ContrastSpec:
    """A target nu'mu with its observed statistic and nuisance residual."""

    nu: np.ndarray               # length n, zero outside the fitted rows
    kind: str                    # "coefficient" or "surface"
    sigma: float
    estimate: float              # nu'y
    z_score: float               # nu'y / (sigma*|nu|)
    z_residual: np.ndarray       # P_nu^perp y

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.nu))


def make_contrast(
    fit: OlsFit,
    data: Dataset,
    sigma: float,
    coefficient: Optional[int] = None,
    surface_point: Optional[np.ndarray] = None,
) -> ContrastSpec:
    """Contrast for a coefficient beta^M_j or a surface value x0'beta^M.

    nu = (w' X_M^+ I_M)' with w = e_j or x0; supported on the fitted rows
    and satisfying nu'y = the corresponding OLS functional exactly.
    """
    if (coefficient is None) == (surface_point is None):
        raise ValidationError("specify exactly one of coefficient / surface_point")
    if sigma <= 0 or not np.isfinite(sigma):
        raise ValidationError("sigma must be positive and finite")
    pinv = fit.pseudoinverse()
    if coefficient is not None:
        j = int(coefficient)
        if not (0 <= j < fit.p):
            raise ValidationError(f"coefficient index {j} out of range")
        w = pinv[j]
        kind = "coefficient"
    else:
        x0 = np.asarray(surface_point, dtype=float)
        if x0.shape != (fit.p,):
            raise ValidationError(f"surface point must have length {fit.p}")
        if not np.any(x0):
            raise ValidationError("surface point is identically zero")
        w = x0 @ pinv
        kind = "surface"
    nu = np.zeros(data.n)
    nu[fit.subset] = w
    norm = float(np.linalg.norm(nu))
    estimate = float(nu @ data.y)
    z_score = estimate / (sigma * norm)
    z_residual = data.y - (estimate / norm**2) * nu
    return ContrastSpec(
        nu=nu,
        kind=kind,
        sigma=float(sigma),
        estimate=estimate,
        z_score=z_score,
        z_residual=z_residual,
    )


# -- known-sigma truncated-normal inference ----------------------------------


@dataclass(frozen=True)
class ZInferenceResult:
    estimate: float
    p_value: float                # one-sided survival 1 - F(Z)
    p_two_sided: float
    ci: tuple                     # (lo, hi) for nu'mu
    truncation: IntervalSet       # on the Z axis


def selective_z_inference(
    contrast: ContrastSpec,
    event: SelectionEvent,
    alpha: float = 0.05,
) -> ZInferenceResult:
    """Truncated-normal p-value and CI for nu'mu given the event.

    The event is sliced along nu from the nuisance residual; the slice is
    in nu'y/|nu| units and is rescaled by 1/sigma onto the Z axis.
    """
    if not (0.0 < alpha < 1.0):
        raise ValidationError("alpha must be in (0, 1)")
    scale = contrast.sigma * contrast.norm
    support = _z_truncation(contrast, event)
    dist = TruncatedNormal(0.0, support)
    p = dist.sf(contrast.z_score)
    lo = tn_mean_solve(support, contrast.z_score, 1.0 - alpha / 2.0)
    hi = tn_mean_solve(support, contrast.z_score, alpha / 2.0)
    if max(abs(lo), abs(hi)) > CI_SEARCH_LIMIT:
        raise NumericalError(
            "confidence bound escaped the search range; the truncation set "
            "is numerically pathological"
        )
    return ZInferenceResult(
        estimate=contrast.estimate,
        p_value=p,
        p_two_sided=two_sided(p),
        ci=(lo * scale, hi * scale),
        truncation=support,
    )


def _z_truncation(contrast: ContrastSpec, event: SelectionEvent) -> IntervalSet:
    direction = contrast.nu / contrast.norm
    t_set = slice_event_on_line(event, contrast.z_residual, direction)
    support = t_set.scale(1.0 / contrast.sigma)
    if not support.contains(
        contrast.z_score, tol=1e-8 * max(1.0, abs(contrast.z_score))
    ):
        raise NumericalError(
            f"observed statistic {contrast.z_score} not inside its "
            f"truncation set {support}"
        )
    return support


def prediction_interval(
    contrast: ContrastSpec,
    event: SelectionEvent,
    alpha: float = 0.05,
    grid_size: int = PREDICTION_GRID,
) -> tuple:
    """Conservative interval for x0'beta^M + eps0 with fresh N(0, sigma^2) noise.

    Splits alpha between a selective CI at level alpha_tilde and a
    normal-quantile widening for the new-observation noise, and returns
    the shortest interval over a grid of splits (alpha/2 is always on the
    grid).
    """
    if not (0.0 < alpha < 1.0):
        raise ValidationError("alpha must be in (0, 1)")
    fractions = np.linspace(1.0 / (grid_size + 1), grid_size / (grid_size + 1.0), grid_size - 1)
    splits = np.unique(np.append(alpha * fractions, alpha / 2.0))
    best = None
    for a_tilde in splits:
        res = selective_z_inference(contrast, event, alpha=a_tilde)
        widen = float(special.ndtri(1.0 - (alpha - a_tilde) / 2.0)) * contrast.sigma
        lo, hi = res.ci[0] - widen, res.ci[1] + widen
        if best is None or hi - lo < best[1] - best[0]:
            best = (lo, hi)
    return best


# -- group chi-squared test (known sigma) ------------------------------------


@dataclass(frozen=True)
class GroupTestSpec:
    """Padded projection P for testing beta^M_g = 0 as P mu = 0."""

    group: tuple
    projection_basis: np.ndarray   # n x k orthonormal, supported on M rows
    statistic: float               # chi = |P y| / sigma
    direction: np.ndarray          # w = P y / |P y|
    residual: np.ndarray           # z = y - P y
    dof: int


@dataclass(frozen=True)
class Chi2TestResult:
    statistic: float              # chi squared
    dof: int
    p_value: float
    truncation: IntervalSet       # on the chi^2 axis


def build_group_test(
    fit: OlsFit, data: Dataset, group: Sequence[int], sigma: float
) -> GroupTestSpec:
    group = _check_group(group, fit.p)
    comp = [j for j in range(fit.p) if j not in group]
    Xm = data.X[fit.subset]
    Xg = Xm[:, list(group)]
    if comp:
        qc = orthonormal_basis(Xm[:, comp])
        Xg = Xg - qc @ (qc.T @ Xg)
    sv = np.linalg.svd(Xg, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise ValidationError(
            "group columns are collinear with the rest of the design after "
            "projection; the test's degrees of freedom would drop"
        )
    qt = orthonormal_basis(Xg)
    basis = np.zeros((data.n, qt.shape[1]))
    basis[fit.subset] = qt
    py = basis @ (basis.T @ data.y)
    norm = float(np.linalg.norm(py))
    if norm == 0.0:
        raise NumericalError("projected response is exactly zero")
    return GroupTestSpec(
        group=tuple(group),
        projection_basis=basis,
        statistic=norm / sigma,
        direction=py / norm,
        residual=data.y - py,
        dof=qt.shape[1],
    )


def group_chi2_test(
    fit: OlsFit,
    data: Dataset,
    group: Sequence[int],
    event: SelectionEvent,
    sigma: float,
) -> Chi2TestResult:
    """Truncated chi-squared p-value for H0: beta^M_g = 0 with known sigma."""
    if sigma <= 0:
        raise ValidationError("sigma must be positive")
    spec = build_group_test(fit, data, group, sigma)
    t_set = slice_event_on_line(event, spec.residual, spec.direction)
    chi_set = t_set.scale(1.0 / sigma).intersect(IntervalSet.closed(0.0, np.inf))
    support = chi_set.square()
    stat = spec.statistic**2
    p = TruncatedChi2(spec.dof, support).sf(stat)
    if not support.contains(stat, tol=1e-8 * max(1.0, stat)):
        raise NumericalError("chi-squared statistic escaped its truncation set")
    return Chi2TestResult(statistic=stat, dof=spec.dof, p_value=p, truncation=support)


# -- truncated F test (unknown sigma) ----------------------------------------


@dataclass(frozen=True)
class FTestSpec:
    group: tuple
    statistic: float
    d1: int
    d2: int
    w_delta: np.ndarray
    w_2: np.ndarray
    z: np.ndarray
    r: float


@dataclass(frozen=True)
class FTestResult:
    statistic: float
    d1: int
    d2: int
    p_value: float                # one-sided survival
    truncation: IntervalSet


def build_f_test(fit: OlsFit, data: Dataset, group: Sequence[int]) -> FTestSpec:
    group = _check_group(group, fit.p)
    M = fit.subset
    Xm = data.X[M]
    ym = data.y[M]
    comp = [j for j in range(fit.p) if j not in group]
    if comp:
        q_sub = orthonormal_basis(Xm[:, comp])
        r1_m = ym - q_sub @ (q_sub.T @ ym)
    else:
        r1_m = ym.copy()
    q_full = fit.hat_basis()
    r2_m = ym - q_full @ (q_full.T @ ym)

    n = data.n
    r1 = np.zeros(n)
    r1[M] = r1_m
    r2 = np.zeros(n)
    r2[M] = r2_m
    d1 = len(group)
    d2 = fit.m - fit.p
    if d2 < 1:
        raise ValidationError("need |M| - p >= 1 for the F test")
    ss1, ss2 = float(r1 @ r1), float(r2 @ r2)
    diff = r1 - r2
    ssd = float(diff @ diff)
    if ssd <= 0 or ss2 <= 0:
        raise NumericalError(
            "degenerate F decomposition (nested residuals coincide or the "
            "full-model fit is exact)"
        )
    return FTestSpec(
        group=tuple(group),
        statistic=(ssd / d1) / (ss2 / d2),
        d1=d1,
        d2=d2,
        w_delta=diff / math.sqrt(ssd),
        w_2=r2 / math.sqrt(ss2),
        z=data.y - r1,
        r=math.sqrt(ss1),
    )


def selective_f_test(
    fit: OlsFit,
    data: Dataset,
    group: Sequence[int],
    event: SelectionEvent,
) -> FTestResult:
    """Truncated-F p-value for H0: mu_M in span(X_{M,g^c}), sigma unknown."""
    spec = build_f_test(fit, data, group)
    support = slice_event_on_f_curve(
        event,
        spec.z,
        spec.w_delta,
        spec.w_2,
        spec.r,
        spec.d1,
        spec.d2,
        spec.statistic,
    )
    p = TruncatedF(spec.d1, spec.d2, support).sf(spec.statistic)
    return FTestResult(
        statistic=spec.statistic,
        d1=spec.d1,
        d2=spec.d2,
        p_value=p,
        truncation=support,
    )


def _check_group(group: Sequence[int], p: int) -> list:
    group = sorted(set(int(j) for j in group))
    if not group:
        raise ValidationError("group must be non-empty")
    if group[0] < 0 or group[-1] >= p:
        raise ValidationError("group indices out of range")
    return group


# -- naive baselines ----------------------------------------------------------


@dataclass(frozen=True)
class NaiveResult:
    estimate: float
    p_value: float
    ci: tuple


def naive_coefficient_inference(
    fit: OlsFit, data: Dataset, j: int, alpha: float = 0.05
) -> NaiveResult:
    """Classical t inference on the retained rows, ignoring selection."""
    df = fit.m - fit.p
    if df < 1:
        raise ValidationError("no residual degrees of freedom")
    pinv = fit.pseudoinverse()
    se = fit.sigma_refit * float(np.linalg.norm(pinv[j]))
    est = float(fit.coefficients[j])
    tstat = est / se
    p = 2.0 * float(stats.t.cdf(-abs(tstat), df))
    tq = float(stats.t.ppf(1.0 - alpha / 2.0, df))
    return NaiveResult(estimate=est, p_value=p, ci=(est - se * tq, est + se * tq))


def naive_group_f_test(fit: OlsFit, data: Dataset, group: Sequence[int]) -> NaiveResult:
    """Classical F test of the group on the retained rows."""
    spec = build_f_test(fit, data, group)
    p = float(stats.f.sf(spec.statistic, spec.d1, spec.d2))
    return NaiveResult(estimate=spec.statistic, p_value=p, ci=(math.nan, math.nan))


# -- sigma estimation ----------------------------------------------------------


def estimate_sigma_aug_lasso(
    data: Dataset,
    alpha: Optional[float] = None,
    n_alphas: int = 100,
    eps: float = 1e-4,
    cv_folds: int = 10,
) -> float:
    """Noise-scale estimate from a lasso on the augmented design (X : I).

    Cross-validated penalty on a geometric grid spanning four decades
    below the critical level; the intercept is unpenalized and counts
    toward the support size in the degrees-of-freedom correction.
    """
    from sklearn.linear_model import Lasso, LassoCV

    n = data.n
    if data.has_intercept:
        base = data.X[:, 1:]
    else:
        base = data.X
    aug = np.hstack([base, np.eye(n)])
    fit_intercept = bool(data.has_intercept)
    common = dict(fit_intercept=fit_intercept, tol=1e-9, max_iter=100_000)
    if alpha is None:
        model = LassoCV(
            n_alphas=n_alphas, eps=eps, cv=cv_folds, **common
        )
    else:
        model = Lasso(alpha=alpha, **common)
    model.fit(aug, data.y)
    resid = data.y - model.predict(aug)
    support = int(np.count_nonzero(model.coef_)) + (1 if fit_intercept else 0)
    dof = n - support
    if dof < 1:
        raise NumericalError(
            f"augmented lasso support saturated the sample (|S|={support}, n={n})"
        )
    return float(np.sqrt(resid @ resid / dof))


# -- per-dataset report ---------------------------------------------------------


@dataclass(frozen=True)
class CoefficientReport:
    name: str
    estimate: float
    naive_p: float
    selective_p: float
    naive_ci: tuple
    ci: Optional[tuple]           # None when sigma mode gives no intervals
    truncation: Optional[IntervalSet]
    method: str                   # SELECT-KNOWN | SELECT-EST | SELECT-EXACT


@dataclass(frozen=True)
class InferenceReport:
    method: str
    cutoff: float
    outliers: np.ndarray          # 0-based indices
    adjusted_r2: float
    sigma_mode: str
    sigma: Optional[float]
    alpha: float
    coefficients: list


def analyze(
    data: Dataset,
    detection,
    sigma_mode: str = "exact",
    sigma_value: Optional[float] = None,
    alpha: float = 0.05,
) -> InferenceReport:
    """Per-coefficient selective and naive inference after detection.

    sigma_mode "known" uses the supplied noise scale, "est" plugs in the
    augmented-lasso estimate, and "exact" needs no scale at all (truncated
    F, no confidence intervals).  Coefficient tests report the two-sided
    transform in the normal route and the plain survival value in the F
    route.
    """
    from .linalg import fit_ols

    if sigma_mode not in ("known", "est", "exact"):
        raise ValidationError(f"unknown sigma mode {sigma_mode!r}")
    if sigma_mode == "known":
        if sigma_value is None or sigma_value <= 0:
            raise ValidationError("sigma mode 'known' needs a positive sigma value")
        sigma = float(sigma_value)
        tag = "SELECT-KNOWN"
    elif sigma_mode == "est":
        sigma = estimate_sigma_aug_lasso(data)
        tag = "SELECT-EST"
    else:
        sigma = None
        tag = "SELECT-EXACT"

    fit = fit_ols(data, detection.non_outliers)
    rows = []
    for j, name in enumerate(data.column_names):
        naive = naive_coefficient_inference(fit, data, j, alpha=alpha)
        if sigma_mode == "exact":
            f_res = selective_f_test(fit, data, [j], detection.event)
            rows.append(
                CoefficientReport(
                    name=name,
                    estimate=naive.estimate,
                    naive_p=naive.p_value,
                    selective_p=f_res.p_value,
                    naive_ci=naive.ci,
                    ci=None,
                    truncation=f_res.truncation,
                    method=tag,
                )
            )
        else:
            contrast = make_contrast(fit, data, sigma, coefficient=j)
            z_res = selective_z_inference(contrast, detection.event, alpha=alpha)
            rows.append(
                CoefficientReport(
                    name=name,
                    estimate=naive.estimate,
                    naive_p=naive.p_value,
                    selective_p=z_res.p_two_sided,
                    naive_ci=naive.ci,
                    ci=z_res.ci,
                    truncation=z_res.truncation,
                    method=tag,
                )
            )
    return InferenceReport(
        method=detection.method,
        cutoff=detection.cutoff,
        outliers=detection.outliers,
        adjusted_r2=fit.adjusted_r2,
        sigma_mode=sigma_mode,
        sigma=sigma,
        alpha=alpha,
        coefficients=rows,
    )
