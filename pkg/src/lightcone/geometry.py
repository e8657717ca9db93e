"""Minkowski half-space geometry for the light-cone interaction kernels.

Natural units (hbar = c = 1).  Points live on [0, inf) x R^3; metric
signature (+,-,-,-).  The b-vector, its root r*, the admissible-domain
indicator and the angular cut functions are the building blocks of the
delta-free form of the massless operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GeometryError",
    "SpacetimePoint",
    "BVector",
    "interval",
    "b_vector",
    "r_star",
    "a0_indicator",
    "cut_K",
    "cut_P",
]


class GeometryError(ValueError):
    """Raised for geometric preconditions (coincident points, bad domain)."""


@dataclass(frozen=True)
class SpacetimePoint:
    """Time t >= 0 plus a spatial 3-vector."""

    t: float
    r: tuple[float, float, float]

    def __post_init__(self):
        t = float(self.t)
        r = tuple(float(c) for c in self.r)
        if len(r) != 3:
            raise GeometryError("SpacetimePoint: spatial part must be a 3-vector")
        if not np.isfinite(t) or not all(np.isfinite(c) for c in r):
            raise GeometryError("SpacetimePoint: non-finite coordinates")
        if t < 0.0:
            raise GeometryError("SpacetimePoint: time must be >= 0 (half-space)")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "r", r)

    def four(self) -> np.ndarray:
        """Coordinates as a length-4 array (t, x, y, z)."""
        return np.array([self.t, *self.r], dtype=float)

    def spatial(self) -> np.ndarray:
        return np.array(self.r, dtype=float)


@dataclass(frozen=True)
class BVector:
    """The shifted 4-vector b = x - y - (-|y'|, y')."""

    b0: float
    bvec: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "b0", float(self.b0))
        object.__setattr__(self, "bvec", tuple(float(c) for c in self.bvec))

    @property
    def bnorm(self) -> float:
        return float(np.sqrt(sum(c * c for c in self.bvec)))

    @property
    def b2(self) -> float:
        return self.b0 * self.b0 - sum(c * c for c in self.bvec)


def interval(x: SpacetimePoint, y: SpacetimePoint) -> float:
    """Minkowski interval (x0-y0)^2 - |x-y|^2."""
    dt = x.t - y.t
    dr = x.spatial() - y.spatial()
    return float(dt * dt - dr @ dr)


def b_vector(x: SpacetimePoint, y: SpacetimePoint, yprime_spatial) -> BVector:
    """b0 = x0 - y0 + |y'|, bvec = x - y - y' for a spatial offset y'."""
    yp = np.asarray(yprime_spatial, dtype=float)
    b0 = x.t - y.t + float(np.linalg.norm(yp))
    bv = x.spatial() - y.spatial() - yp
    return BVector(b0, tuple(bv))


def r_star(b: BVector, cos_theta: float):
    """Root r* = b^2 / (2 (b0 + |b| cos theta)) of the light-cone condition.

    Returns None when the denominator vanishes or the root is not strictly
    positive (absent root is a value, not an error).  The caller applies the
    separate upper restriction r* < x0.
    """
    if not -1.0 <= cos_theta <= 1.0:
        raise GeometryError("r_star: cos_theta outside [-1, 1]")
    denom = 2.0 * (b.b0 + b.bnorm * cos_theta)
    if denom == 0.0:
        return None
    r = b.b2 / denom
    if r <= 0.0:
        return None
    return float(r)


def a0_indicator(b: BVector, x0: float, cos_theta: float) -> bool:
    """Admissible-domain indicator of the massless operator.

    True on the two mutually exclusive branches
        b^2 > 0, b0 > 0, cos theta >  b^2/(2 x0 |b|) - b0/|b|
        b^2 < 0,          cos theta <  b^2/(2 x0 |b|) - b0/|b|
    which is equivalent to 0 < r* < x0.  Ties at the strict inequalities
    count as outside (measure zero).
    """
    if x0 <= 0.0:
        raise GeometryError("a0_indicator: x0 must be > 0")
    b2 = b.b2
    bn = b.bnorm
    if bn == 0.0:
        # cos-theta dependence vanishes; fall back to the root condition.
        r = r_star(b, 0.0)
        return r is not None and r < x0
    thresh = b2 / (2.0 * x0 * bn) - b.b0 / bn
    if b2 > 0.0:
        return b.b0 > 0.0 and cos_theta > thresh
    if b2 < 0.0:
        return cos_theta < thresh
    return False


def _separation(x: SpacetimePoint, y: SpacetimePoint) -> float:
    d = float(np.linalg.norm(x.spatial() - y.spatial()))
    if d == 0.0:
        raise GeometryError("undefined cut: coincident spatial points")
    return d


def cut_K(x: SpacetimePoint, y: SpacetimePoint, rho: float) -> float:
    """Angular cut K_{x-y}(rho) = (x-y)^2/(2 rho |x-y|) + (x0-y0)/|x-y|.

    cos theta < K is equivalent to b^2 > 0 for |y'| = rho.
    """
    if rho <= 0.0:
        raise GeometryError("cut_K: rho must be > 0")
    d = _separation(x, y)
    return interval(x, y) / (2.0 * rho * d) + (x.t - y.t) / d


def cut_P(x: SpacetimePoint, y: SpacetimePoint, rho: float) -> float:
    """Angular cut P_{x,y}(rho) = (x0+y0)^2/(2 rho |x-y|) - |x-y|/(2 rho) - (x0+y0)/|x-y|."""
    if rho <= 0.0:
        raise GeometryError("cut_P: rho must be > 0")
    d = _separation(x, y)
    s = x.t + y.t
    return s * s / (2.0 * rho * d) - d / (2.0 * rho) - s / d
