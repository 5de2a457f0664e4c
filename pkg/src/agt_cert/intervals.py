"""Elementwise interval enclosures of vectors and matrices.

An interval matrix ``[lo, hi]`` represents every real matrix ``X`` with
``lo <= X <= hi`` elementwise.  All operations in this module are sound
over-approximations: the result interval contains every value obtainable
by applying the real operation to members of the operand intervals.

Arithmetic is plain float64 without outward rounding; soundness is with
respect to real arithmetic.  Matrix products use the midpoint-radius
formulation (Rump's algorithm), which is exact for degenerate (point)
operands.  Elementwise products use the exact four-endpoint hull.

The ``_arr_*`` kernels operate on raw ``(lo, hi)`` ndarray pairs and
broadcast over leading batch dimensions; the public classes and the
``i*`` functions wrap them with validation for 2-D / 1-D use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class IntervalError(ValueError):
    """Raised for malformed intervals or incompatible operands."""


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise IntervalError(f"{name} must be finite, got non-finite entries")
    return arr


def _validate_pair(lo: np.ndarray, hi: np.ndarray) -> None:
    if lo.shape != hi.shape:
        raise IntervalError(f"endpoint shapes differ: {lo.shape} vs {hi.shape}")
    if np.any(lo > hi):
        raise IntervalError("lower endpoint exceeds upper endpoint")


@dataclass(frozen=True)
class IntervalMatrix:
    """Interval over real matrices: every X with lo <= X <= hi elementwise."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _as_float_array(self.lo, "lo")
        hi = _as_float_array(self.hi, "hi")
        if lo.ndim != 2:
            raise IntervalError(f"IntervalMatrix requires 2-D arrays, got {lo.ndim}-D")
        _validate_pair(lo, hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, values) -> "IntervalMatrix":
        arr = _as_float_array(values, "values")
        return cls(arr, arr.copy())

    @property
    def shape(self):
        return self.lo.shape

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, x, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(self.lo - atol <= x) and np.all(x <= self.hi + atol))


@dataclass(frozen=True)
class IntervalVector:
    """Interval over real vectors (a box in R^n)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _as_float_array(self.lo, "lo")
        hi = _as_float_array(self.hi, "hi")
        if lo.ndim != 1:
            raise IntervalError(f"IntervalVector requires 1-D arrays, got {lo.ndim}-D")
        _validate_pair(lo, hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, values) -> "IntervalVector":
        arr = _as_float_array(values, "values")
        return cls(arr, arr.copy())

    @classmethod
    def ball(cls, center, radius) -> "IntervalVector":
        """Box [center - radius, center + radius]; radius may be scalar or per-entry."""
        c = _as_float_array(center, "center")
        r = np.broadcast_to(np.asarray(radius, dtype=np.float64), c.shape)
        if np.any(r < 0):
            raise IntervalError("radius must be nonnegative")
        return cls(c - r, c + r)

    @property
    def size(self) -> int:
        return self.lo.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, x, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(self.lo - atol <= x) and np.all(x <= self.hi + atol))


# ---------------------------------------------------------------------------
# Array kernels.  Each takes/returns (lo, hi) ndarray pairs and supports
# leading batch dimensions where noted.  No validation here: callers own it.
# ---------------------------------------------------------------------------

def _arr_add(alo, ahi, blo, bhi):
    return alo + blo, ahi + bhi


def _arr_sub(alo, ahi, blo, bhi):
    # [a] - [b] = [a_lo - b_hi, a_hi - b_lo]
    return alo - bhi, ahi - blo


def _arr_neg(lo, hi):
    return -hi, -lo


def _arr_scale(lo, hi, alpha: float):
    if alpha >= 0:
        return alpha * lo, alpha * hi
    return alpha * hi, alpha * lo


def _arr_elemmul(alo, ahi, blo, bhi):
    """Exact per-entry hull: min/max over the four endpoint products."""
    p1 = alo * blo
    p2 = alo * bhi
    p3 = ahi * blo
    p4 = ahi * bhi
    lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
    hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
    return lo, hi


def _arr_matmul(alo, ahi, blo, bhi):
    """Midpoint-radius interval matrix product (Rump's algorithm).

    C_mu +/- (|A_mu| B_r + A_r |B_mu| + A_r B_r) with A_mu = (lo+hi)/2,
    A_r = (hi-lo)/2.  Broadcasts over leading batch dimensions via
    np.matmul.  Point operands (zero radius) give the exact product.
    """
    amu = (alo + ahi) * 0.5
    ar = (ahi - alo) * 0.5
    bmu = (blo + bhi) * 0.5
    br = (bhi - blo) * 0.5
    cmu = np.matmul(amu, bmu)
    crad = np.matmul(np.abs(amu), br) + np.matmul(ar, np.abs(bmu)) + np.matmul(ar, br)
    return cmu - crad, cmu + crad


def _arr_matmul_exact(alo, ahi, blo, bhi):
    """Exact-hull interval matrix product: per-entry endpoint hulls summed
    over the contraction axis.

    This is the tightest interval product when the entries vary
    independently (it equals the true range then), at the cost of
    materializing the (.., n, k, m) product tensor; reserve it for small
    final-step computations such as logit differences.
    """
    a_lo = alo[..., :, :, None]
    a_hi = ahi[..., :, :, None]
    b_lo = blo[..., None, :, :]
    b_hi = bhi[..., None, :, :]
    lo, hi = _arr_elemmul(a_lo, a_hi, b_lo, b_hi)
    return lo.sum(axis=-2), hi.sum(axis=-2)


def _arr_clip(lo, hi, kappa: float):
    return np.clip(lo, -kappa, kappa), np.clip(hi, -kappa, kappa)


def _arr_relu(lo, hi):
    return np.maximum(lo, 0.0), np.maximum(hi, 0.0)


def _arr_intersect(alo, ahi, blo, bhi):
    """Elementwise tightest common enclosure of two sound enclosures."""
    return np.maximum(alo, blo), np.minimum(ahi, bhi)


def _arr_contains(lo, hi, x, atol: float = 0.0) -> bool:
    return bool(np.all(lo - atol <= x) and np.all(x <= hi + atol))


# ---------------------------------------------------------------------------
# Public operations on IntervalMatrix / IntervalVector.
# ---------------------------------------------------------------------------

def _check_same_shape(a, b, op: str) -> None:
    if a.lo.shape != b.lo.shape:
        raise IntervalError(f"{op}: shape mismatch {a.lo.shape} vs {b.lo.shape}")


def _wrap_like(a, lo, hi):
    return type(a)(lo, hi)


def iadd(a, b):
    """Interval sum; contains X + Y for all X in a, Y in b."""
    _check_same_shape(a, b, "iadd")
    return _wrap_like(a, *_arr_add(a.lo, a.hi, b.lo, b.hi))


def isub(a, b):
    """Interval difference; contains X - Y for all X in a, Y in b."""
    _check_same_shape(a, b, "isub")
    return _wrap_like(a, *_arr_sub(a.lo, a.hi, b.lo, b.hi))


def imatmul(a: IntervalMatrix, b: IntervalMatrix) -> IntervalMatrix:
    """Interval matrix product via the midpoint-radius formulation."""
    if a.lo.shape[1] != b.lo.shape[0]:
        raise IntervalError(
            f"imatmul: inner dimensions differ: {a.lo.shape} vs {b.lo.shape}"
        )
    return IntervalMatrix(*_arr_matmul(a.lo, a.hi, b.lo, b.hi))


def ielemmul(a, b):
    """Elementwise interval product (exact hull per entry)."""
    _check_same_shape(a, b, "ielemmul")
    return _wrap_like(a, *_arr_elemmul(a.lo, a.hi, b.lo, b.hi))


def itranspose(a: IntervalMatrix) -> IntervalMatrix:
    return IntervalMatrix(a.lo.T.copy(), a.hi.T.copy())


def iscale(a, alpha: float):
    """Scale by a real; negative alpha swaps endpoints."""
    return _wrap_like(a, *_arr_scale(a.lo, a.hi, float(alpha)))


def iclip(a, kappa: float):
    """Interval image of the elementwise clamp to [-kappa, kappa]."""
    if kappa < 0:
        raise IntervalError(f"iclip requires kappa >= 0, got {kappa}")
    return _wrap_like(a, *_arr_clip(a.lo, a.hi, float(kappa)))


def iintersect(a, b):
    """Tightest common enclosure; sound when both operands are sound."""
    _check_same_shape(a, b, "iintersect")
    lo, hi = _arr_intersect(a.lo, a.hi, b.lo, b.hi)
    if np.any(lo > hi):
        raise IntervalError("iintersect: empty intersection")
    return _wrap_like(a, lo, hi)
