"""Weight functions, their iterated integrals, and the operator-norm bound ledger.

Every bound the solver certifies against lives here: the generic
supremum-based operator bounds, the closed-form massive-case bounds with
their contraction condition, the N-particle pair sum, the FLRW bound, and
the pointwise/position-dependent bounds for the massless operator.

Weight families
---------------
Exponential   g(t) = exp(gamma t)
GaussPoly     g(t) = (1 + alpha t^2) exp(alpha t^2 / 2)
Flrw          g(t) = exp(gamma * int_0^t a(tau) dtau)  for a scale factor a

For Exponential/GaussPoly the iterated integrals g_n are integrals of g
itself.  For Flrw the relevant chain starts from the scale-weighted kernel
G = a * g, whose first integral has the closed form G_1 = (g - 1)/gamma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad as _quad
from scipy.special import dawsn as _dawsn

from .geometry import SpacetimePoint, interval
from .specfun import erfi as _erfi

__all__ = [
    "BoundsUnavailableError",
    "Exponential",
    "GaussPoly",
    "Flrw",
    "WeightFamily",
    "BoundReport",
    "g_eval",
    "suprema",
    "SUPREMA_CLOSED_BOUNDS",
    "supremum_bounds",
    "closed_form_bounds",
    "npart_bound",
    "flrw_bound",
    "flrw_g1_residual",
    "pointwise_bound_a0",
    "intermediate_bound_a0",
]

EIGHT_PI = 8.0 * math.pi


class BoundsUnavailableError(RuntimeError):
    """A required supremum diverges: bounds unavailable for this family."""


def _check_monotone_weight(weight: Callable, label: str):
    ts = np.linspace(0.0, 5.0, 64)
    vals = np.asarray([weight(t) for t in ts], dtype=float)
    if vals[0] <= 0.0:
        raise ValueError(f"{label}: weight must be positive (1/g bounded)")
    if np.any(np.diff(vals) < -1e-12 * np.abs(vals[:-1])):
        raise ValueError(f"{label}: weight must be monotonically increasing")


@dataclass(frozen=True)
class Exponential:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise ValueError("Exponential: gamma must be > 0")

    def weight(self, t):
        return np.exp(self.gamma * np.asarray(t, dtype=float))

    # kernel of the iterated-integral chain (= the weight itself)
    def kernel(self, t):
        return self.weight(t)

    def chain(self, n: int, t):
        t = np.asarray(t, dtype=float)
        g = self.gamma
        if n == 0:
            return self.kernel(t)
        if n == 1:
            return np.expm1(g * t) / g
        if n == 2:
            return (np.expm1(g * t) - g * t) / g**2
        if n == 3:
            return (np.expm1(g * t) - g * t - 0.5 * (g * t) ** 2) / g**3
        return _iterated_quadrature(self.kernel, n, t)

    def ratio(self, p: int, n: int, t):
        """t^p * g_n(t) / g(t), overflow-safe for large t."""
        t = np.asarray(t, dtype=float)
        g = self.gamma
        e = np.exp(-np.minimum(g * t, 745.0))
        if n == 1:
            core = (1.0 - e) / g
        elif n == 2:
            core = (1.0 - e * (1.0 + g * t)) / g**2
        elif n == 3:
            core = (1.0 - e * (1.0 + g * t + 0.5 * (g * t) ** 2)) / g**3
        else:
            raise ValueError("ratio: n must be 1..3")
        return t**p * core

    def sup_scale(self) -> float:
        return 1.0 / self.gamma


@dataclass(frozen=True)
class GaussPoly:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError("GaussPoly: alpha must be > 0")

    def weight(self, t):
        t = np.asarray(t, dtype=float)
        return (1.0 + self.alpha * t * t) * np.exp(0.5 * self.alpha * t * t)

    def kernel(self, t):
        return self.weight(t)

    def chain(self, n: int, t):
        t = np.asarray(t, dtype=float)
        a = self.alpha
        if n == 0:
            return self.kernel(t)
        if n == 1:
            return t * np.exp(0.5 * a * t * t)
        if n == 2:
            return np.expm1(0.5 * a * t * t) / a
        if n == 3:
            return (math.sqrt(math.pi / (2.0 * a)) * _erfi(np.sqrt(a / 2.0) * t) - t) / a
        return _iterated_quadrature(self.kernel, n, t)

    def ratio(self, p: int, n: int, t):
        t = np.asarray(t, dtype=float)
        a = self.alpha
        poly = 1.0 + a * t * t
        if n == 1:
            core = t / poly
        elif n == 2:
            core = -np.expm1(-0.5 * a * t * t) / (a * poly)
        elif n == 3:
            # g3/g written through the Dawson function (no overflow)
            core = (math.sqrt(2.0 / a) * _dawsn(np.sqrt(a / 2.0) * t) - t * np.exp(-0.5 * a * t * t)) / (a * poly)
        else:
            raise ValueError("ratio: n must be 1..3")
        return t**p * core

    def sup_scale(self) -> float:
        return 1.0 / math.sqrt(self.alpha)


@dataclass(frozen=True)
class Flrw:
    gamma: float
    scale_factor: Callable = field(compare=False)
    scale_integral: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise ValueError("Flrw: gamma must be > 0")
        a0 = float(self.scale_factor(0.0))
        if abs(a0) > 1e-12:
            raise ValueError("Flrw: scale factor must vanish at eta = 0")
        for eta in (1e-3, 0.1, 1.0, 3.0):
            if not float(self.scale_factor(eta)) > 0.0:
                raise ValueError("Flrw: scale factor must be positive for eta > 0")

    def _integral_a(self, t):
        if self.scale_integral is not None:
            return np.asarray(self.scale_integral(t), dtype=float)
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.array([_quad(self.scale_factor, 0.0, ti, epsabs=1e-13, epsrel=1e-12)[0] for ti in ts])
        return out if np.ndim(t) else float(out[0])

    def weight(self, t):
        return np.exp(self.gamma * self._integral_a(t))

    def kernel(self, t):
        # scale-weighted kernel G = a * g
        t = np.asarray(t, dtype=float)
        return np.asarray(self.scale_factor(t), dtype=float) * self.weight(t)

    def chain(self, n: int, t):
        t = np.asarray(t, dtype=float)
        if n == 0:
            return self.kernel(t)
        if n == 1:
            # G_1 = (g - 1)/gamma: d/dt ((g-1)/gamma) = a g = G and G_1(0) = 0
            return np.expm1(self.gamma * self._integral_a(t)) / self.gamma
        return _iterated_quadrature(self.kernel, n, t)

    def ratio(self, p: int, n: int, t):
        t = np.asarray(t, dtype=float)
        if n == 1:
            core = -np.expm1(-self.gamma * self._integral_a(t)) / self.gamma
            return t**p * core
        return t**p * self.chain(n, t) / self.weight(t)

    def sup_scale(self) -> float:
        return 1.0 / self.gamma


WeightFamily = Exponential | GaussPoly | Flrw


def _iterated_quadrature(kernel: Callable, n: int, t, abs_tol: float = 1e-12):
    """n-fold iterated integral of the kernel by nested adaptive quadrature."""

    def level(k: int, ti: float) -> float:
        if k == 0:
            return float(kernel(ti))
        val, _ = _quad(lambda s: level(k - 1, s), 0.0, ti, epsabs=abs_tol, epsrel=1e-10, limit=200)
        return val

    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.array([level(n, ti) for ti in ts])
    return out if np.ndim(t) else float(out[0])


def g_eval(family: WeightFamily, n: int, t):
    """g_n(t): the weight itself for n = 0, iterated kernel integrals for n >= 1.

    Closed forms where available (all n for Exponential, n <= 3 for
    GaussPoly, n <= 1 for Flrw), adaptive quadrature otherwise.
    """
    if n < 0:
        raise ValueError("g_eval: n must be >= 0")
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0.0):
        raise ValueError("g_eval: negative t rejected")
    if n == 0:
        return family.weight(t)
    return family.chain(n, t)


def _golden_max(f: Callable, a: float, b: float, tol: float = 1e-12) -> tuple[float, float]:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol * max(1.0, abs(a) + abs(b)):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    t = 0.5 * (a + b)
    return t, f(t)


def numerical_sup(f: Callable, t_scale: float, *, grid_points: int = 3500) -> float:
    """Supremum of f over t >= 0 by log-spaced scan plus golden-section refine.

    Raises BoundsUnavailableError when f is still growing at the horizon
    (divergent supremum); a flat approach to an asymptote is accepted and
    the boundary value returned.
    """
    ts = np.concatenate([[0.0], np.geomspace(t_scale * 1e-8, t_scale * 1e8, grid_points)])
    vals = np.asarray(f(ts), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise BoundsUnavailableError("supremum scan produced non-finite values")
    i = int(np.argmax(vals))
    if i >= len(ts) - 2:
        tail_growth = vals[-1] - vals[-40]
        if tail_growth > 1e-9 * max(abs(vals[-1]), 1e-300):
            raise BoundsUnavailableError("ratio still increasing at the scan horizon")
        return float(vals[-1])
    lo = ts[max(i - 1, 0)]
    hi = ts[i + 1]
    _, fmax = _golden_max(lambda t: float(f(np.asarray([t]))[0]), lo, hi)
    return float(max(fmax, vals[i]))


# Supremum slots, in report order: (t-power p, chain index n)
_SUP_SLOTS = [(0, 1), (1, 1), (0, 2), (1, 2), (2, 2), (0, 3), (2, 3)]


def suprema(family: GaussPoly) -> tuple[float, ...]:
    """The seven suprema sup t^p g_n / g entering the operator bounds.

    Order: (g1/g, t g1/g, g2/g, t g2/g, t^2 g2/g, g3/g, t^2 g3/g).
    The first two have the closed values 1/(2 sqrt(alpha)) and 1/alpha; the
    rest must not exceed the closed bounds in SUPREMA_CLOSED_BOUNDS.
    """
    if not isinstance(family, GaussPoly):
        raise ValueError("suprema: GaussPoly family required")
    scale = family.sup_scale()
    return tuple(numerical_sup(lambda t, p=p, n=n: family.ratio(p, n, t), scale) for p, n in _SUP_SLOTS)


def SUPREMA_CLOSED_BOUNDS(alpha: float) -> tuple[float, ...]:
    """Closed-form values/bounds for the seven suprema (same order)."""
    return (
        0.5 / math.sqrt(alpha),          # equality
        1.0 / alpha,                     # equality
        1.0 / alpha,                     # upper bound
        0.5 / alpha**1.5,                # upper bound
        1.0 / alpha**2,                  # upper bound
        (3.0 * math.sqrt(2.0) / 5.0) / alpha**1.5,  # upper bound
        (2.0 / 3.0) / alpha**2.5,        # upper bound
    )


@dataclass(frozen=True)
class BoundReport:
    """Per-operator norm bounds and the contraction verdict."""

    b0: float
    b1: float
    b2: float
    b12: float
    params: dict

    def __post_init__(self):
        for name in ("b0", "b1", "b2", "b12"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0.0):
                raise ValueError(f"BoundReport: {name} must be finite and >= 0")

    @property
    def total(self) -> float:
        return self.b0 + self.b1 + self.b2 + self.b12

    @property
    def contraction(self) -> bool:
        return self.total < 1.0


def supremum_bounds(lam: float, m1: float, m2: float, family: WeightFamily) -> BoundReport:
    """Supremum-based operator bounds for an arbitrary weight family.

    b0  = lam/(8 pi) (sup g1/g)^2
    b1  = lam m1^2/(16 pi) [3 (sup t g1/g)(sup g2/g) + 3 (sup g1/g)(sup t g2/g)
                            + 2 (sup g1/g)(sup g3/g)]
    b2  = same with m2
    b12 = lam m1^2 m2^2/(96 pi) [(sup t^2 g2/g)(sup t g1/g)
                                 + 1/2 (sup t^2 g3/g)(sup g1/g)]

    Raises BoundsUnavailableError when a required supremum diverges.
    """
    if lam <= 0.0:
        raise ValueError("supremum_bounds: lambda must be > 0")
    if m1 < 0.0 or m2 < 0.0:
        raise ValueError("supremum_bounds: masses must be >= 0")
    scale = family.sup_scale()

    def sup(p, n):
        return numerical_sup(lambda t: family.ratio(p, n, t), scale)

    s_g1 = sup(0, 1)
    b0 = lam / EIGHT_PI * s_g1**2
    b1 = b2 = b12 = 0.0
    if m1 > 0.0 or m2 > 0.0:
        s_t_g1 = sup(1, 1)
        s_g2 = sup(0, 2)
        s_t_g2 = sup(1, 2)
        s_g3 = sup(0, 3)
        mixed = 3.0 * s_t_g1 * s_g2 + 3.0 * s_g1 * s_t_g2 + 2.0 * s_g1 * s_g3
        b1 = lam * m1**2 / (16.0 * math.pi) * mixed
        b2 = lam * m2**2 / (16.0 * math.pi) * mixed
        if m1 > 0.0 and m2 > 0.0:
            s_t2_g2 = sup(2, 2)
            s_t2_g3 = sup(2, 3)
            b12 = lam * m1**2 * m2**2 / (96.0 * math.pi) * (s_t2_g2 * s_t_g1 + 0.5 * s_t2_g3 * s_g1)
    return BoundReport(b0, b1, b2, b12, params={"lambda": lam, "m1": m1, "m2": m2, "family": family})


def closed_form_bounds(lam: float, m1: float, m2: float, alpha: float) -> BoundReport:
    """Closed-form massive-case bounds for the GaussPoly weight.

    b0 = lam/(32 pi alpha), b1/b2 = 5 lam m^2/(16 pi alpha^2),
    b12 = lam m1^2 m2^2/(80 pi alpha^3); contraction iff
    (lam/(8 pi alpha)) (1/4 + 5(m1^2+m2^2)/(2 alpha) + m1^2 m2^2/(10 alpha^2)) < 1.
    """
    if lam <= 0.0 or alpha <= 0.0:
        raise ValueError("closed_form_bounds: lambda and alpha must be > 0")
    if m1 < 0.0 or m2 < 0.0:
        raise ValueError("closed_form_bounds: masses must be >= 0")
    b0 = lam / (32.0 * math.pi * alpha)
    b1 = 5.0 * lam * m1**2 / (16.0 * math.pi * alpha**2)
    b2 = 5.0 * lam * m2**2 / (16.0 * math.pi * alpha**2)
    b12 = lam * m1**2 * m2**2 / (80.0 * math.pi * alpha**3)
    return BoundReport(b0, b1, b2, b12, params={"lambda": lam, "m1": m1, "m2": m2, "alpha": alpha})


def npart_bound(lam: float, masses: Sequence[float], alpha: float) -> float:
    """N-particle bound: sum of pairwise two-particle totals."""
    masses = [float(m) for m in masses]
    if len(masses) < 2:
        raise ValueError("npart_bound: N must be >= 2")
    total = 0.0
    for i in range(len(masses)):
        for j in range(i + 1, len(masses)):
            total += closed_form_bounds(lam, masses[i], masses[j], alpha).total
    return total


def flrw_bound(lam: float, gamma: float) -> float:
    """FLRW operator bound lam/(8 pi gamma^2).

    Contraction iff this is < 1 (large gamma, i.e. fast-growing weight).
    """
    if lam <= 0.0 or gamma <= 0.0:
        raise ValueError("flrw_bound: lambda and gamma must be > 0")
    return lam / (EIGHT_PI * gamma**2)


def flrw_g1_residual(family: Flrw, ts) -> float:
    """Max deviation of quadrature G_1 from the closed form (g - 1)/gamma.

    Note: G_1 differs from g/gamma by the constant 1/gamma exactly
    (G_1(0) = 0 while g(0) = 1); (g-1)/gamma is the identity that holds.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    quad_vals = np.array([_quad(lambda s: float(family.kernel(s)), 0.0, t, epsabs=1e-13, epsrel=1e-12)[0] for t in ts])
    closed = family.chain(1, ts)
    return float(np.max(np.abs(quad_vals - closed)))


def pointwise_bound_a0(lam: float, family: WeightFamily, x0: float, y0: float) -> float:
    """Position-independent bound (lam/8 pi) g1(x0) g1(y0) for |A0 psi| / ||psi||_g."""
    if x0 < 0.0 or y0 < 0.0:
        raise ValueError("pointwise_bound_a0: times must be >= 0")
    return lam / EIGHT_PI * float(family.chain(1, x0)) * float(family.chain(1, y0))


def intermediate_bound_a0(lam: float, family: WeightFamily, x: SpacetimePoint, y: SpacetimePoint) -> float:
    """Tighter position-dependent bound for |A0 psi|(x,y) / ||psi||_g.

    Evaluates the three-branch rho-integral form (xi-variables, indicator
    cases for the interval sign) by adaptive quadrature.  Never exceeds the
    coarse pointwise bound.
    """
    x0, y0 = x.t, y.t
    if x0 <= 0.0 or y0 <= 0.0:
        return 0.0
    d = float(np.linalg.norm(x.spatial() - y.spatial()))
    itv = interval(x, y)
    xi_p = 0.5 * (x0 + y0 + d)
    xi_m = 0.5 * (x0 + y0 - d)

    def k0(s):
        return float(family.chain(0, max(s, 0.0)))

    def k1(s):
        return float(family.chain(1, max(s, 0.0)))

    def k2(s):
        return 0.0 if s <= 0.0 else float(family.chain(2, s))

    coef = lam / (16.0 * math.pi)
    tiny = 1e-12 * max(x0, y0, 1.0)

    if itv < 0.0:
        if xi_m <= 0.0:
            return 0.0
        q = 0.5 * (y0 - x0 + d)

        def f1(rho):
            inner = k2(min(xi_m, y0 - rho)) - k2(max(xi_m - rho, 0.0))
            if rho > q:
                inner += k2(x0) + k2(y0 - rho) - k2(xi_m) - k2(xi_p - rho)
            return k0(y0 - rho) / d * inner

        breaks = [q, xi_m, y0 - xi_m]
        return coef * _quad_branch(f1, 0.0, y0, breaks)

    if itv > 0.0 and x0 > y0:
        if d <= tiny:
            xi = 0.5 * (x0 + y0)

            def f2lim(rho):
                return k0(y0 - rho) * (k1(xi) - k1(xi - rho))

            return coef * _quad_branch(f2lim, 0.0, y0, [])

        def f2(rho):
            inner = k2(xi_p) + k2(xi_m - rho) - k2(xi_m) - k2(xi_p - rho)
            return k0(y0 - rho) / d * inner

        return coef * _quad_branch(f2, 0.0, y0, [xi_m, xi_p - y0])

    if itv > 0.0 and y0 > x0:
        lo = 0.5 * (y0 - x0 - d)
        if d <= tiny:
            xi = 0.5 * (x0 + y0)

            def f3lim(rho):
                return k0(y0 - rho) * k1(min(xi - rho, x0))

            return coef * _quad_branch(f3lim, lo, xi, [xi - x0])

        def f3(rho):
            inner = k2(min(xi_p - rho, x0)) - k2(max(xi_m - rho, 0.0))
            return k0(y0 - rho) / d * inner

        return coef * _quad_branch(f3, lo, xi_p, [xi_p - x0, xi_m])

    return 0.0


def _quad_branch(f, lo, hi, breaks):
    if hi <= lo:
        return 0.0
    pts = sorted(p for p in breaks if lo < p < hi)
    val, _ = _quad(f, lo, hi, points=pts or None, epsabs=1e-12, epsrel=1e-9, limit=200)
    return float(val)
