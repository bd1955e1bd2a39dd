"""Quadratic selection events and their one-dimensional truncation sets.

A selection event is a union of intersections (disjunctive normal form)
of constraints {y : y'Qy + a'y + b >= 0}.  The matrices that arise here
are never stored densely: each Q is a scaled residual projector plus a
few rank-one terms, which keeps evaluation and slicing O(n p) per
constraint instead of O(n^2).

Truncation sets come from restricting an event to a line y = z + t*v
(exactly, via quadratic root solving) or to the fixed-sphere curve
traced by the F statistic (numerically, via sign-change scanning plus
bisection).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import NumericalError
from .intervals import IntervalSet, solve_quadratic_sign_set

F_CURVE_GRID = 4096          # nodes per scan of the F curve
F_ROOT_RTOL = 1e-10          # relative bisection tolerance for curve roots
F_DEDUP_TOL = 1e-12          # relative endpoint dedup
F_TANGENCY_TOL = 1e-12       # |value|/scale below this without a sign change
                             # triggers a grid-refinement retry


@dataclass(frozen=True)
class QuadraticConstraint:
    """Structured constraint  y'Qy + a'y + b >= 0.

    Q = proj_coef * (I - basis @ basis.T) + sum_k rank1_coefs[k] * u_k u_k'
    with `basis` an orthonormal matrix shared between constraints (the
    residual projector of a design).  Any part may be absent.
    """

    proj_coef: float = 0.0
    basis: Optional[np.ndarray] = field(default=None, repr=False)
    rank1: Optional[np.ndarray] = field(default=None, repr=False)       # (k, n)
    rank1_coefs: Optional[np.ndarray] = field(default=None, repr=False)  # (k,)
    linear: Optional[np.ndarray] = field(default=None, repr=False)
    const: float = 0.0

    def value(self, y: np.ndarray) -> float:
        return float(self.values(np.asarray(y, dtype=float)[None, :])[0])

    def values(self, Y: np.ndarray, cache: Optional[dict] = None) -> np.ndarray:
        """Constraint values for a batch of rows Y (m, n) -> (m,)."""
        out = np.full(Y.shape[0], self.const)
        if self.proj_coef != 0.0:
            out += self.proj_coef * _perp_sumsq(Y, self.basis, cache)
        if self.rank1 is not None:
            out += (Y @ self.rank1.T) ** 2 @ self.rank1_coefs
        if self.linear is not None:
            out += Y @ self.linear
        return out

    def line_coefficients(
        self, z: np.ndarray, v: np.ndarray, cache: Optional[dict] = None
    ) -> tuple:
        """(A, B, C) with value(z + t*v) = A t^2 + B t + C."""
        A = B = 0.0
        C = self.const
        if self.proj_coef != 0.0:
            pzz, pzv, pvv = _perp_products(z, v, self.basis, cache)
            A += self.proj_coef * pvv
            B += 2.0 * self.proj_coef * pzv
            C += self.proj_coef * pzz
        if self.rank1 is not None:
            uz = self.rank1 @ z
            uv = self.rank1 @ v
            c = self.rank1_coefs
            A += float(c @ (uv * uv))
            B += 2.0 * float(c @ (uz * uv))
            C += float(c @ (uz * uz))
        if self.linear is not None:
            B += float(self.linear @ v)
            C += float(self.linear @ z)
        return A, B, C


def affine_constraint(a: np.ndarray, b: float) -> QuadraticConstraint:
    """Constraint a'y + b >= 0 (zero quadratic part)."""
    return QuadraticConstraint(linear=np.asarray(a, dtype=float), const=float(b))


def _perp_sumsq(Y, basis, cache):
    """Row sums of squares of (I - BB')Y' shared across constraints."""
    key = ("sumsq", id(Y), id(basis))
    if cache is not None and key in cache:
        return cache[key]
    total = np.einsum("ij,ij->i", Y, Y)
    if basis is not None:
        YB = Y @ basis
        total = total - np.einsum("ij,ij->i", YB, YB)
    if cache is not None:
        cache[key] = total
    return total


def _perp_products(z, v, basis, cache):
    key = ("prod", id(z), id(v), id(basis))
    if cache is not None and key in cache:
        return cache[key]
    if basis is None:
        out = float(z @ z), float(z @ v), float(v @ v)
    else:
        bz, bv = basis.T @ z, basis.T @ v
        out = (
            float(z @ z - bz @ bz),
            float(z @ v - bz @ bv),
            float(v @ v - bv @ bv),
        )
    if cache is not None:
        cache[key] = out
    return out


class SelectionEvent:
    """Union over groups of intersections of quadratic constraints."""

    def __init__(self, groups: Sequence[Sequence[QuadraticConstraint]]):
        groups = [list(g) for g in groups]
        if not groups or any(not g for g in groups):
            raise ValueError("event needs at least one non-empty constraint group")
        self.groups = groups

    @classmethod
    def intersection(cls, constraints) -> "SelectionEvent":
        return cls([list(constraints)])

    @classmethod
    def whole_space(cls) -> "SelectionEvent":
        return cls([[QuadraticConstraint(const=0.0)]])

    @property
    def n_constraints(self) -> int:
        return sum(len(g) for g in self.groups)

    def constraint_values(self, Y: np.ndarray) -> list:
        """Per-group value matrices for a batch of points (m, n)."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        cache: dict = {}
        return [
            np.column_stack([c.values(Y, cache) for c in g]) for g in self.groups
        ]

    def contains(self, y: np.ndarray, tol: float = 0.0) -> bool:
        vals = self.constraint_values(np.asarray(y, dtype=float)[None, :])
        return any(bool(np.all(V[0] >= -tol)) for V in vals)

    def contains_many(self, Y: np.ndarray, tol: float = 0.0) -> np.ndarray:
        vals = self.constraint_values(Y)
        out = np.zeros(np.atleast_2d(Y).shape[0], dtype=bool)
        for V in vals:
            out |= np.all(V >= -tol, axis=1)
        return out


def event_membership(event: SelectionEvent, y: np.ndarray, tol: float = 0.0) -> bool:
    """Exact DNF evaluation of the event at y."""
    return event.contains(y, tol=tol)


def slice_event_on_line(
    event: SelectionEvent, z: np.ndarray, v: np.ndarray
) -> IntervalSet:
    """{t : z + t v in event} for a unit direction v.

    Each constraint restricts to a quadratic in t, solved exactly; the
    per-constraint sign sets are combined through the event's DNF.
    """
    v = np.asarray(v, dtype=float)
    z = np.asarray(z, dtype=float)
    nv = np.linalg.norm(v)
    if abs(nv - 1.0) > 1e-10:
        raise ValueError(f"direction must be a unit vector, |v| = {nv}")
    cache: dict = {}
    result = IntervalSet.empty()
    for g in event.groups:
        piece = IntervalSet.full()
        for c in g:
            A, B, C = c.line_coefficients(z, v, cache)
            piece = piece.intersect(solve_quadratic_sign_set(A, B, C))
            if piece.is_empty:
                break
        result = result.union(piece)
    if result.is_empty:
        raise NumericalError(
            "line slice of the selection event is empty; the event and the "
            "observation it came from are inconsistent"
        )
    return result


def f_curve_points(
    z: np.ndarray,
    w_delta: np.ndarray,
    w_2: np.ndarray,
    r: float,
    d1: int,
    d2: int,
    f_values: np.ndarray,
) -> np.ndarray:
    """Points y(F) = z + r g1(F) w_delta + r g2(F) w_2 for a batch of F."""
    f_values = np.atleast_1d(np.asarray(f_values, dtype=float))
    q = d1 * f_values / d2
    g1 = np.sqrt(q / (1.0 + q))
    g2 = np.sqrt(1.0 / (1.0 + q))
    return (
        z[None, :]
        + (r * g1)[:, None] * w_delta[None, :]
        + (r * g2)[:, None] * w_2[None, :]
    )


def slice_event_on_f_curve(
    event: SelectionEvent,
    z: np.ndarray,
    w_delta: np.ndarray,
    w_2: np.ndarray,
    r: float,
    d1: int,
    d2: int,
    f_observed: float,
    n_grid: int = F_CURVE_GRID,
    _retries: int = 2,
) -> IntervalSet:
    """{F >= 0 : y(F) in event} for the F-statistic curve.

    The composition of a constraint with y(F) is not polynomial in F, so
    roots are isolated by scanning a geometric grid over [0, F_max] and
    refined by bisection; the section beyond F_max is classified with the
    analytic limit point y(inf) = z + r*w_delta.  Near-zero constraint
    values without a sign change trigger a finer rescan (possible grazing
    root).
    """
    for vec, name in ((w_delta, "w_delta"), (w_2, "w_2")):
        if abs(np.linalg.norm(vec) - 1.0) > 1e-8:
            raise ValueError(f"{name} must be a unit vector")
    if abs(float(w_delta @ w_2)) > 1e-8:
        raise ValueError("w_delta and w_2 must be orthogonal")
    if r <= 0:
        raise ValueError("radius r must be positive")

    f_max = max(10.0 * f_observed, float(stats.f.ppf(0.9999, d1, d2)))
    grid = np.concatenate([[0.0], np.geomspace(f_max * 1e-10, f_max, n_grid - 1)])
    values = event.constraint_values(
        f_curve_points(z, w_delta, w_2, r, d1, d2, grid)
    )

    suspicious = False
    roots = [0.0, f_max]
    for gi, V in enumerate(values):
        scale = np.maximum(np.max(np.abs(V), axis=0), 1e-300)
        for k in range(V.shape[1]):
            col = V[:, k]
            sgn = np.sign(col)
            crossing = np.where(sgn[:-1] * sgn[1:] < 0)[0]
            fn = _constraint_on_curve(event.groups[gi][k], z, w_delta, w_2, r, d1, d2)
            for i in crossing:
                roots.append(_bisect_root(fn, grid[i], grid[i + 1], col[i]))
            roots.extend(grid[sgn == 0.0])
            # grazing-root heuristic: tiny magnitude but no local crossing
            tiny = np.abs(col) < F_TANGENCY_TOL * scale[k]
            interior = tiny & (sgn != 0.0)
            interior[np.clip(crossing, 0, len(col) - 1)] = False
            interior[np.clip(crossing + 1, 0, len(col) - 1)] = False
            if np.any(interior):
                suspicious = True

    if suspicious and _retries > 0:
        warnings.warn(
            "possible grazing root on the F curve; rescanning on a finer grid",
            RuntimeWarning,
            stacklevel=2,
        )
        return slice_event_on_f_curve(
            event, z, w_delta, w_2, r, d1, d2, f_observed,
            n_grid=n_grid * 4, _retries=_retries - 1,
        )
    if suspicious:
        raise NumericalError(
            "suspected missed root on the F curve persisted after grid refinement"
        )

    roots = np.unique(np.asarray(roots))
    keep = np.ones(roots.shape[0], dtype=bool)
    keep[1:] = np.diff(roots) > F_DEDUP_TOL * np.maximum(1.0, roots[1:])
    roots = roots[keep]

    mids = 0.5 * (roots[:-1] + roots[1:])
    inside = event.contains_many(f_curve_points(z, w_delta, w_2, r, d1, d2, mids))
    pieces = [
        (roots[i], roots[i + 1]) for i in range(len(mids)) if inside[i]
    ]
    # classify [f_max, inf) by the analytic limit of the curve
    if event.contains((z + r * w_delta)):
        pieces.append((f_max, np.inf))
    result = IntervalSet(pieces)
    if result.is_empty:
        raise NumericalError("F-curve slice of the selection event is empty")
    if not result.contains(f_observed, tol=1e-8 * max(1.0, f_observed)):
        raise NumericalError(
            f"observed F statistic {f_observed} fell outside its own "
            f"truncation set {result}"
        )
    return result


def _constraint_on_curve(c, z, w_delta, w_2, r, d1, d2):
    def fn(F: float) -> float:
        return float(
            c.value(f_curve_points(z, w_delta, w_2, r, d1, d2, np.array([F]))[0])
        )

    return fn


def _bisect_root(fn, lo: float, hi: float, f_lo: float) -> float:
    lo_pos = f_lo > 0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == lo_pos:
            lo = mid
        else:
            hi = mid
        if hi - lo <= F_ROOT_RTOL * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)
