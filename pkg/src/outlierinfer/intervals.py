"""Finite unions of disjoint closed real intervals.

The closed-interval convention is used throughout: strict inequalities
are collapsed to their closures (the boundary has measure zero under
every continuous model served here), complements of closed sets are
reported closed, and touching intervals are merged.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

# Coefficient-degeneracy threshold for quadratic sign sets; applied after
# normalizing (a2, a1, a0) by their largest magnitude.
DEGENERACY_TOL = 1e-14


class IntervalSet:
    """Ordered union of disjoint closed intervals, endpoints may be ±inf.

    Instances are immutable by convention; every operation returns a new
    canonical set (sorted, overlapping/touching intervals merged).
    """

    __slots__ = ("bounds",)

    def __init__(self, bounds=(), *, _canonical: bool = False):
        arr = np.asarray(bounds, dtype=float).reshape(-1, 2)
        if not _canonical:
            arr = _canonicalize(arr)
        self.bounds = arr
        self.bounds.setflags(write=False)

    # -- constructors ------------------------------------------------------

    @classmethod
    def empty(cls) -> "IntervalSet":
        return cls(np.empty((0, 2)), _canonical=True)

    @classmethod
    def full(cls) -> "IntervalSet":
        return cls([[-np.inf, np.inf]], _canonical=True)

    @classmethod
    def closed(cls, lo: float, hi: float) -> "IntervalSet":
        if np.isnan(lo) or np.isnan(hi):
            raise ValueError("interval endpoints must not be NaN")
        if lo > hi:
            raise ValueError(f"interval lower bound {lo} exceeds upper bound {hi}")
        return cls([[lo, hi]], _canonical=True)

    # -- basic queries -----------------------------------------------------

    def __len__(self) -> int:
        return self.bounds.shape[0]

    def __iter__(self):
        return iter(map(tuple, self.bounds))

    def __repr__(self) -> str:
        parts = ", ".join(f"[{a:.6g}, {b:.6g}]" for a, b in self.bounds)
        return f"IntervalSet({parts})" if parts else "IntervalSet(empty)"

    def __eq__(self, other) -> bool:
        if not isinstance(other, IntervalSet):
            return NotImplemented
        return self.bounds.shape == other.bounds.shape and bool(
            np.array_equal(self.bounds, other.bounds)
        )

    @property
    def is_empty(self) -> bool:
        return self.bounds.shape[0] == 0

    @property
    def is_full(self) -> bool:
        return (
            self.bounds.shape[0] == 1
            and self.bounds[0, 0] == -np.inf
            and self.bounds[0, 1] == np.inf
        )

    def contains(self, x: float, tol: float = 0.0) -> bool:
        if self.is_empty:
            return False
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return bool(np.any((x >= lo - tol) & (x <= hi + tol)))

    def contains_many(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for lo, hi in self.bounds:
            out |= (x >= lo - tol) & (x <= hi + tol)
        return out

    # -- set algebra -------------------------------------------------------

    def union(self, other: "IntervalSet") -> "IntervalSet":
        if self.is_empty:
            return other
        if other.is_empty:
            return self
        return IntervalSet(np.vstack([self.bounds, other.bounds]))

    def intersect(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        i = j = 0
        a, b = self.bounds, other.bounds
        while i < len(a) and j < len(b):
            lo = max(a[i, 0], b[j, 0])
            hi = min(a[i, 1], b[j, 1])
            if lo <= hi:
                out.append((lo, hi))
            if a[i, 1] < b[j, 1]:
                i += 1
            else:
                j += 1
        return IntervalSet(out)

    def complement(self) -> "IntervalSet":
        # Closed-set convention: the complement keeps the shared endpoints.
        if self.is_empty:
            return IntervalSet.full()
        out = []
        prev = -np.inf
        for lo, hi in self.bounds:
            if prev < lo:
                out.append((prev, lo))
            prev = hi
        if prev < np.inf:
            out.append((prev, np.inf))
        return IntervalSet(out)

    # -- transforms --------------------------------------------------------

    def scale(self, c: float) -> "IntervalSet":
        """Image of the set under t -> c*t (c must be nonzero)."""
        if c == 0:
            raise ValueError("scale factor must be nonzero")
        b = self.bounds * c
        if c < 0:
            b = b[:, ::-1]
        return IntervalSet(b)

    def square(self) -> "IntervalSet":
        """Image under t -> t**2; requires the set to lie in [0, inf)."""
        if len(self) and self.bounds[0, 0] < 0:
            raise ValueError("square() requires a subset of [0, inf)")
        return IntervalSet(self.bounds**2)

    def to_pairs(self) -> list:
        """JSON-friendly [lo, hi] pairs with None standing in for ±inf."""
        return [
            [None if np.isinf(lo) else float(lo), None if np.isinf(hi) else float(hi)]
            for lo, hi in self.bounds
        ]


def _canonicalize(arr: np.ndarray) -> np.ndarray:
    if arr.size == 0:
        return np.empty((0, 2))
    if np.any(np.isnan(arr)):
        raise ValueError("interval endpoints must not be NaN")
    keep = arr[:, 0] <= arr[:, 1]
    arr = arr[keep]
    if arr.shape[0] == 0:
        return np.empty((0, 2))
    order = np.lexsort((arr[:, 1], arr[:, 0]))
    arr = arr[order]
    merged = [list(arr[0])]
    for lo, hi in arr[1:]:
        if lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return np.asarray(merged, dtype=float)


def combine_interval_sets(kind: str, operands: Iterable[IntervalSet]) -> IntervalSet:
    """Fold `union` / `intersection` / `complement` over interval sets."""
    ops = list(operands)
    if kind == "union":
        out = IntervalSet.empty()
        for s in ops:
            out = out.union(s)
        return out
    if kind == "intersection":
        out = IntervalSet.full()
        for s in ops:
            out = out.intersect(s)
        return out
    if kind == "complement":
        if len(ops) != 1:
            raise ValueError("complement takes exactly one operand")
        return ops[0].complement()
    raise ValueError(f"unknown combination kind {kind!r}")


def solve_quadratic_sign_set(a2: float, a1: float, a0: float) -> IntervalSet:
    """Solution set {t : a2*t^2 + a1*t + a0 >= 0} as an IntervalSet.

    Total on all coefficient triples.  Degenerate leading coefficients are
    classified after normalizing by the largest magnitude, with threshold
    DEGENERACY_TOL; ties on the boundary follow the closed convention.
    """
    scale = max(abs(a2), abs(a1), abs(a0))
    if scale == 0.0 or not np.isfinite(scale):
        if not np.isfinite(scale):
            raise ValueError("non-finite quadratic coefficients")
        return IntervalSet.full()  # 0 >= 0
    A, B, C = a2 / scale, a1 / scale, a0 / scale

    if abs(A) < DEGENERACY_TOL:
        if abs(B) < DEGENERACY_TOL:
            return IntervalSet.full() if C >= 0 else IntervalSet.empty()
        root = -C / B
        if B > 0:
            return IntervalSet.closed(root, np.inf)
        return IntervalSet.closed(-np.inf, root)

    disc = B * B - 4.0 * A * C
    if A > 0:
        if disc <= 0:
            return IntervalSet.full()
        r1, r2 = _quadratic_roots(A, B, disc)
        return IntervalSet([[-np.inf, r1], [r2, np.inf]])
    # A < 0: parabola opens downward
    if disc < 0:
        return IntervalSet.empty()
    if disc == 0:
        r = -B / (2.0 * A)
        return IntervalSet.closed(r, r)
    r1, r2 = _quadratic_roots(A, B, disc)
    return IntervalSet.closed(r1, r2)


def _quadratic_roots(A: float, B: float, disc: float) -> tuple:
    # Citardauq-style evaluation avoids cancellation for the small root.
    # With disc > 0, q is nonzero and B^2 - disc == 4*A*C, so C/q is
    # computed without touching C itself.
    sq = float(np.sqrt(disc))
    q = -0.5 * (B + np.copysign(sq, B)) if B != 0 else -0.5 * sq
    r1 = q / A
    r2 = (B * B - disc) / (4.0 * A * q)
    return (r1, r2) if r1 <= r2 else (r2, r1)
