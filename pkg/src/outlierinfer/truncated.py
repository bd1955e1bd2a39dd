"""Numerically stable truncated normal, chi-squared and F distributions.

Selective p-values routinely involve distribution mass confined to a far
tail (survival values like 1e-6 after truncation to a set whose own mass
is 1e-4), where naive CDF differences return 0/0.  All interval masses
here are therefore computed on the side away from the bulk, and the
whole calculation drops into log space whenever the total truncated mass
falls below MASS_LOG_SWITCH.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special, stats

from .errors import NumericalError
from .intervals import IntervalSet

MASS_LOG_SWITCH = 1e-12   # below this total mass everything stays in logs
SOLVE_CDF_TOL = 1e-8      # residual |CDF - target| at which bisection stops
SOLVE_MAX_EXPAND = 60     # bracket-doubling attempts in tn_mean_solve

_LOG_EPS = -745.0         # exp() underflow edge


def _log1mexp(x: float) -> float:
    """log(1 - exp(x)) for x <= 0, accurate near both ends."""
    if x >= 0.0:
        return -math.inf if x == 0.0 else math.nan
    if x > -math.log(2.0):
        return math.log(-math.expm1(x))
    return math.log1p(-math.exp(x))


def gaussian_interval_mass(mu: float, lo: float, hi: float) -> tuple:
    """(mass, log_mass) of N(mu, 1) on [lo, hi] without cancellation.

    Same-side intervals use complementary-tail differences through
    log-space; straddling intervals are safe to evaluate directly.
    """
    if lo > hi:
        raise ValueError("interval is reversed")
    a, b = lo - mu, hi - mu
    if a >= 0.0:
        log_mass = _log_tail_diff(special.log_ndtr(-a), special.log_ndtr(-b))
    elif b <= 0.0:
        log_mass = _log_tail_diff(special.log_ndtr(b), special.log_ndtr(a))
    else:
        mass = float(special.ndtr(b) - special.ndtr(a))
        return mass, (math.log(mass) if mass > 0 else -math.inf)
    mass = math.exp(log_mass) if log_mass > _LOG_EPS else 0.0
    return mass, log_mass


def _log_tail_diff(log_big: float, log_small: float) -> float:
    """log(exp(log_big) - exp(log_small)) for log_small <= log_big."""
    if log_big == -math.inf:
        return -math.inf
    return log_big + _log1mexp(min(log_small - log_big, 0.0))


# -- base-family log CDF/SF ------------------------------------------------


def _norm_log_cdf(x: float) -> float:
    return float(special.log_ndtr(x))


def _norm_log_sf(x: float) -> float:
    return float(special.log_ndtr(-x))


def _chi2_log_cdf(x: float, df: float) -> float:
    if x <= 0.0:
        return -math.inf
    if math.isinf(x):
        return 0.0
    v = float(special.gammainc(df / 2.0, x / 2.0))
    if v > 0.0:
        return math.log(v)
    # leading term of the small-x series for the regularized lower
    # incomplete gamma: x^a / (a Gamma(a)) at a = df/2
    a = df / 2.0
    return a * math.log(x / 2.0) - math.log(a) - float(special.gammaln(a))


def _chi2_log_sf(x: float, df: float) -> float:
    if x <= 0.0:
        return 0.0
    if math.isinf(x):
        return -math.inf
    v = float(special.gammaincc(df / 2.0, x / 2.0))
    if v > 0.0:
        return math.log(v)
    # three-term asymptotic tail of the upper incomplete gamma
    a, t = df / 2.0, x / 2.0
    series = 1.0 + (a - 1.0) / t + (a - 1.0) * (a - 2.0) / (t * t)
    return (a - 1.0) * math.log(t) - t - float(special.gammaln(a)) + math.log(series)


def _f_log_cdf(x: float, d1: float, d2: float) -> float:
    if x <= 0.0:
        return -math.inf
    if math.isinf(x):
        return 0.0
    u = d1 * x / (d1 * x + d2)
    v = float(special.betainc(d1 / 2.0, d2 / 2.0, u))
    if v > 0.0:
        return math.log(v)
    a, b = d1 / 2.0, d2 / 2.0
    if u <= 0.0:
        return -math.inf
    return a * math.log(u) - math.log(a) - float(special.betaln(a, b))


def _f_log_sf(x: float, d1: float, d2: float) -> float:
    if x <= 0.0:
        return 0.0
    if math.isinf(x):
        return -math.inf
    u = d2 / (d1 * x + d2)
    v = float(special.betainc(d2 / 2.0, d1 / 2.0, u))
    if v > 0.0:
        return math.log(v)
    a, b = d2 / 2.0, d1 / 2.0
    if u <= 0.0:
        return -math.inf
    return a * math.log(u) - math.log(a) - float(special.betaln(a, b))


# -- truncated families ----------------------------------------------------


class _TruncatedBase:
    """Shared CDF/SF plumbing over an IntervalSet support.

    Subclasses provide _log_cdf / _log_sf of the base family and a
    median; interval masses pick the side away from the median so the
    two log values never nearly cancel in the regime that matters.
    """

    support: IntervalSet

    def _init_support(self, support: IntervalSet, nonnegative: bool) -> None:
        if nonnegative:
            support = support.intersect(IntervalSet.closed(0.0, np.inf))
        if support.is_empty:
            raise NumericalError("truncation set is empty")
        self.support = support
        self._log_masses = np.array(
            [self._interval_log_mass(lo, hi) for lo, hi in support.bounds]
        )
        self._log_total = float(special.logsumexp(self._log_masses))
        if self._log_total == -math.inf:
            raise NumericalError(
                f"truncation set {support} carries zero mass under the base "
                "distribution"
            )

    def _interval_log_mass(self, lo: float, hi: float) -> float:
        if lo >= self._median():
            return _log_tail_diff(self._log_sf(lo), self._log_sf(hi))
        if hi <= self._median():
            return _log_tail_diff(self._log_cdf(hi), self._log_cdf(lo))
        # straddling the median: no cancellation risk, direct is fine
        mass = math.exp(self._log_cdf(hi)) - math.exp(self._log_cdf(lo))
        return math.log(mass) if mass > 0 else -math.inf

    def total_mass(self) -> float:
        return math.exp(self._log_total) if self._log_total > _LOG_EPS else 0.0

    def cdf(self, x: float) -> float:
        return self._ratio(x, upper=False)

    def sf(self, x: float) -> float:
        return self._ratio(x, upper=True)

    def _ratio(self, x: float, upper: bool) -> float:
        parts = []
        for lo, hi in self.support.bounds:
            if upper:
                lo = max(lo, x)
            else:
                hi = min(hi, x)
            if lo >= hi:
                continue
            parts.append(self._interval_log_mass(lo, hi))
        if not parts:
            return 0.0
        log_num = float(special.logsumexp(np.asarray(parts)))
        val = math.exp(min(log_num - self._log_total, 0.0))
        return min(val, 1.0)

    # subclass hooks
    def _log_cdf(self, x: float) -> float:
        raise NotImplementedError

    def _log_sf(self, x: float) -> float:
        raise NotImplementedError

    def _median(self) -> float:
        raise NotImplementedError


class TruncatedNormal(_TruncatedBase):
    """N(mean, 1) truncated to an IntervalSet."""

    def __init__(self, mean: float, support: IntervalSet):
        self.mean = float(mean)
        self._init_support(support, nonnegative=False)

    def _log_cdf(self, x: float) -> float:
        return _norm_log_cdf(x - self.mean)

    def _log_sf(self, x: float) -> float:
        return _norm_log_sf(x - self.mean)

    def _median(self) -> float:
        return self.mean


class TruncatedChi2(_TruncatedBase):
    """Central chi-squared(df) truncated to an IntervalSet within [0, inf)."""

    def __init__(self, df: int, support: IntervalSet):
        if df < 1:
            raise ValueError("df must be a positive integer")
        self.df = int(df)
        self._med = float(stats.chi2.median(df))
        self._init_support(support, nonnegative=True)

    def _log_cdf(self, x: float) -> float:
        return _chi2_log_cdf(x, self.df)

    def _log_sf(self, x: float) -> float:
        return _chi2_log_sf(x, self.df)

    def _median(self) -> float:
        return self._med


class TruncatedF(_TruncatedBase):
    """Central F(d1, d2) truncated to an IntervalSet within [0, inf)."""

    def __init__(self, d1: int, d2: int, support: IntervalSet):
        if d1 < 1 or d2 < 1:
            raise ValueError("degrees of freedom must be positive")
        self.d1, self.d2 = int(d1), int(d2)
        self._med = float(stats.f.median(d1, d2))
        self._init_support(support, nonnegative=True)

    def _log_cdf(self, x: float) -> float:
        return _f_log_cdf(x, self.d1, self.d2)

    def _log_sf(self, x: float) -> float:
        return _f_log_sf(x, self.d1, self.d2)

    def _median(self) -> float:
        return self._med


def tn_mean_solve(support: IntervalSet, z_obs: float, target: float) -> float:
    """Mean mu with TruncatedNormal(mu, support).cdf(z_obs) == target.

    The truncated-normal CDF at fixed z is strictly decreasing in mu, so
    a doubling bracket expansion followed by bisection is exact; stops
    when the CDF residual drops below SOLVE_CDF_TOL.
    """
    if not (0.0 < target < 1.0):
        raise ValueError("target must be in (0, 1)")
    if not support.contains(z_obs, tol=1e-8 * max(1.0, abs(z_obs))):
        raise ValueError(f"z_obs={z_obs} lies outside the support {support}")
    if support.is_full:
        return z_obs - float(special.ndtri(target))

    def g(mu: float) -> float:
        return TruncatedNormal(mu, support).cdf(z_obs) - target

    lo, hi = z_obs - 10.0, z_obs + 10.0
    step = 10.0
    for _ in range(SOLVE_MAX_EXPAND):
        if g(lo) > 0.0:
            break
        step *= 2.0
        lo -= step
    else:
        raise NumericalError(
            f"bracket expansion failed on the low side (z_obs={z_obs}, "
            f"target={target}, support={support})"
        )
    step = 10.0
    for _ in range(SOLVE_MAX_EXPAND):
        if g(hi) < 0.0:
            break
        step *= 2.0
        hi += step
    else:
        raise NumericalError(
            f"bracket expansion failed on the high side (z_obs={z_obs}, "
            f"target={target}, support={support})"
        )

    mid = 0.5 * (lo + hi)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        resid = g(mid)
        if abs(resid) <= SOLVE_CDF_TOL:
            return mid
        if resid > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, abs(mid)):
            break
    resid = g(mid)
    if abs(resid) > math.sqrt(SOLVE_CDF_TOL):
        raise NumericalError(
            f"bisection stalled with CDF residual {resid:.2e} "
            f"(z_obs={z_obs}, target={target})"
        )
    return mid
