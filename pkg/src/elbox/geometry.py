"""Axis-parallel boxes given by a center and a non-negative offset (half-width).

Boxes are closed: a box with a zero offset in some dimension is still a
(degenerate) box, and two boxes that merely touch intersect.
"""
from __future__ import annotations

import math

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class Box:
    """Immutable box; ``center`` and ``offset`` are read-only float vectors.

    Bounds are cached because every operation needs them. Boxes built from
    bounds (intersections) derive their center and offset on first access.
    """

    __slots__ = ("_center", "_offset", "_lo", "_hi")

    def __init__(self, center, offset):
        c = np.atleast_1d(np.array(center, dtype=float))
        o = np.atleast_1d(np.array(offset, dtype=float))
        if c.ndim != 1 or c.shape != o.shape:
            raise ValueError(f"center and offset must be vectors of equal length, got {c.shape} and {o.shape}")
        if np.count_nonzero(o < 0):
            raise ValueError("box offset must be non-negative")
        self._init(_frozen(c), _frozen(o), _frozen(c - o), _frozen(c + o))

    def _init(self, center, offset, lo, hi):
        setter = object.__setattr__
        setter(self, "_center", center)
        setter(self, "_offset", offset)
        setter(self, "_lo", lo)
        setter(self, "_hi", hi)

    @classmethod
    def _from_bounds_unchecked(cls, lo: np.ndarray, hi: np.ndarray) -> "Box":
        b = object.__new__(cls)
        b._init(None, None, _frozen(lo), _frozen(hi))
        return b

    @classmethod
    def from_bounds(cls, lo, hi) -> "Box":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        return cls((lo + hi) / 2, (hi - lo) / 2)

    @property
    def center(self) -> np.ndarray:
        if self._center is None:
            object.__setattr__(self, "_center", _frozen((self._lo + self._hi) / 2))
        return self._center

    @property
    def offset(self) -> np.ndarray:
        if self._offset is None:
            object.__setattr__(self, "_offset", _frozen((self._hi - self._lo) / 2))
        return self._offset

    def __setattr__(self, name, value):
        raise AttributeError("Box is immutable")

    @property
    def dim(self) -> int:
        return self._lo.shape[0]

    def contains_point(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool((self._lo <= x).all() and (x <= self._hi).all())

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.center, other.center) and np.array_equal(self.offset, other.offset)

    __hash__ = None

    def __repr__(self):
        return f"Box(center={self.center.tolist()}, offset={self.offset.tolist()})"


def lower(b: Box) -> np.ndarray:
    """center - offset"""
    return b._lo


def upper(b: Box) -> np.ndarray:
    """center + offset"""
    return b._hi


def _check_dims(a: Box, b: Box):
    if a._lo.shape != b._lo.shape:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def intersection_bounds(c1, o1, c2, o2):
    """Raw (box_min, box_max) of two boxes; works on stacked arrays and does
    not check for emptiness."""
    box_min = np.maximum(c1 - o1, c2 - o2)
    box_max = np.minimum(c1 + o1, c2 + o2)
    return box_min, box_max


def intersect(a: Box, b: Box) -> Box | None:
    """Intersection of two boxes, or None when it is empty."""
    if a._lo.shape != b._lo.shape:
        _check_dims(a, b)
    box_min = np.maximum(a._lo, b._lo)
    box_max = np.minimum(a._hi, b._hi)
    if np.count_nonzero(box_max < box_min):
        return None
    return Box._from_bounds_unchecked(box_min, box_max)


def containment_residual(inner: Box, outer: Box, margin: float = 0.0) -> np.ndarray:
    """max(0, |c_in - c_out| + o_in - o_out - margin) per dimension.

    All zeros means ``inner`` lies inside ``outer`` with at least ``-margin``
    of slack on each side. Evaluated through the cached bounds using
    |c_in - c_out| + o_in - o_out = max(hi_in - hi_out, lo_out - lo_in).
    """
    if inner._lo.shape != outer._lo.shape:
        _check_dims(inner, outer)
    margin = _margin(margin)
    r = np.subtract(inner._hi, outer._hi)
    np.maximum(r, outer._lo - inner._lo, out=r)
    if margin:
        r -= margin
    return np.maximum(r, 0.0, out=r)


def _margin(m):
    if m == 0:
        return 0.0
    m = float(m)
    if not math.isfinite(m):
        raise ValueError("margin must be finite")
    return m


def volume(b: Box | None) -> float:
    if b is None:
        return 0.0
    return float(np.prod(2 * b.offset))


def symmetric_difference_ratio(a: Box, b: Box) -> float:
    """vol(a Δ b) / vol(a ∪ b); 0 for identical boxes, 1 for disjoint ones."""
    va, vb = volume(a), volume(b)
    vi = volume(intersect(a, b))
    union = va + vb - vi
    if union <= 0:
        return 0.0 if a == b else 1.0
    return (va + vb - 2 * vi) / union
