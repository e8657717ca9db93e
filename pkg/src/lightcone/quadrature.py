"""Deterministic and stochastic integration engines.

Deterministic mode tensorizes Gauss-Legendre nodes; Monte Carlo mode uses
stratified sampling with one counter-based (Philox) stream per stratum,
derived deterministically from (seed, context key, stratum index).  Results
are therefore bit-reproducible regardless of scheduling.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad as _quad

__all__ = [
    "IntegrandError",
    "Deterministic",
    "MonteCarlo",
    "QuadSpec",
    "EvalResult",
    "point_key",
    "rng_stream",
    "gauss_legendre",
    "stratified_unit_samples",
    "integrate",
    "adaptive_1d",
    "admissible_radial_window",
    "substituted_angular_integrate",
]


class IntegrandError(RuntimeError):
    """Non-finite integrand sample; carries the offending coordinates."""

    def __init__(self, message, coords=None):
        super().__init__(message)
        self.coords = coords


@dataclass(frozen=True)
class Deterministic:
    points_per_axis: int = 8

    def __post_init__(self):
        if self.points_per_axis < 2:
            raise ValueError("points_per_axis must be >= 2")


@dataclass(frozen=True)
class MonteCarlo:
    samples: int = 4096
    strata_per_axis: int = 2

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.strata_per_axis < 1:
            raise ValueError("strata_per_axis must be >= 1")


@dataclass(frozen=True)
class QuadSpec:
    mode: Deterministic | MonteCarlo
    seed: int = 0
    target_rel_error: float = 1e-2  # advisory for MC, enforced for adaptive rules

    def __post_init__(self):
        if self.target_rel_error <= 0.0:
            raise ValueError("target_rel_error must be > 0")


@dataclass(frozen=True)
class EvalResult:
    """Complex value estimate with statistical uncertainty and sample count."""

    value: complex
    stderr: float
    samples_used: int

    def __post_init__(self):
        if not np.isfinite(self.stderr) or self.stderr < 0.0:
            raise ValueError("stderr must be finite and >= 0")

    def __add__(self, other: "EvalResult") -> "EvalResult":
        return EvalResult(
            self.value + other.value,
            float(np.hypot(self.stderr, other.stderr)),
            self.samples_used + other.samples_used,
        )

    def scaled(self, factor) -> "EvalResult":
        return EvalResult(self.value * factor, self.stderr * abs(factor), self.samples_used)


ZERO_RESULT = EvalResult(0.0 + 0.0j, 0.0, 0)


def point_key(*arrays) -> int:
    """Stable 128-bit key from the float64 bits of coordinate arrays."""
    h = hashlib.blake2b(digest_size=16)
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=float)).tobytes())
    return int.from_bytes(h.digest(), "little")


def rng_stream(seed: int, *key_parts: int) -> np.random.Generator:
    """Philox generator for the stream identified by (seed, key parts)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key_parts))
    return np.random.Generator(np.random.Philox(ss))


@lru_cache(maxsize=128)
def gauss_legendre(n: int):
    """Cached Gauss-Legendre nodes/weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def gl_nodes(n: int, lo, hi):
    """Gauss-Legendre nodes/weights mapped to [lo, hi] (lo/hi may be arrays)."""
    x, w = gauss_legendre(n)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = mid[..., None] + half[..., None] * x
    weights = half[..., None] * w
    return nodes, weights


def midpoint_nodes(n: int, lo: float, hi: float):
    """Equally spaced midpoint nodes; spectrally accurate on periodic axes."""
    h = (hi - lo) / n
    x = lo + h * (np.arange(n) + 0.5)
    w = np.full(n, h)
    return x, w


def _effective_strata(samples: int, strata_per_axis: int, dim: int) -> int:
    """Largest strata count (per axis) keeping >= 2 samples per stratum."""
    spa = max(1, strata_per_axis)
    while spa > 1 and 2 * spa**dim > samples:
        spa -= 1
    return spa


def stratified_unit_samples(seed: int, key: tuple, dim: int, samples: int, strata_per_axis: int):
    """Stratified uniform samples of [0,1)^dim.

    Returns (points, stratum_of_sample, samples_per_stratum).  One Philox
    stream per stratum, spawned in stratum order, so the result does not
    depend on scheduling.
    """
    spa = _effective_strata(samples, strata_per_axis, dim)
    n_strata = spa**dim
    base = samples // n_strata
    extra = samples % n_strata
    counts = np.full(n_strata, base, dtype=int)
    counts[:extra] += 1

    root = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    children = root.spawn(n_strata)
    pts = np.empty((samples, dim), dtype=float)
    stratum_of = np.empty(samples, dtype=int)
    pos = 0
    inv = 1.0 / spa
    for s in range(n_strata):
        n_s = counts[s]
        if n_s == 0:
            continue
        gen = np.random.Generator(np.random.Philox(children[s]))
        u = gen.random((n_s, dim))
        idx = s
        corner = np.empty(dim)
        for d in range(dim - 1, -1, -1):
            corner[d] = (idx % spa) * inv
            idx //= spa
        pts[pos : pos + n_s] = corner + u * inv
        stratum_of[pos : pos + n_s] = s
        pos += n_s
    return pts, stratum_of, counts


def pooled_mc_estimate(values: np.ndarray, stratum_of: np.ndarray, counts: np.ndarray, volume: float):
    """Unbiased stratified-MC estimate with per-stratum variance pooling.

    Equal-volume strata; returns (value, stderr).
    """
    n_strata = len(counts)
    w = volume / n_strata
    total = 0.0 + 0.0j
    var = 0.0
    for s in range(n_strata):
        sel = values[stratum_of == s]
        n_s = len(sel)
        if n_s == 0:
            continue
        mean = sel.mean()
        total += w * mean
        if n_s >= 2:
            v = (np.abs(sel - mean) ** 2).sum() / (n_s - 1)
            var += (w * w) * float(v.real) / n_s
    return total, float(np.sqrt(var))


def integrate(domain: Sequence[tuple], f: Callable, spec: QuadSpec, *, key: tuple = ()) -> EvalResult:
    """Integrate f over a product of bounded intervals.

    f maps an (n, dim) array of points to an (n,) array of (complex) values.
    Deterministic mode: tensor Gauss-Legendre; MC mode: stratified sampling.
    Reproducible given (spec.seed, key, domain, dim).
    """
    dom = [(float(lo), float(hi)) for lo, hi in domain]
    dim = len(dom)
    volume = 1.0
    for lo, hi in dom:
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError("integrate: domain must be bounded")
        volume *= hi - lo
    if volume == 0.0:
        return ZERO_RESULT

    if isinstance(spec.mode, Deterministic):
        n = spec.mode.points_per_axis
        axes = [gl_nodes(n, lo, hi) for lo, hi in dom]
        grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        wts = np.ones(pts.shape[0])
        for wg in wgrids:
            wts = wts * wg.ravel()
        vals = np.asarray(f(pts))
        _check_samples(vals, pts)
        return EvalResult(complex(np.sum(wts * vals)), 0.0, pts.shape[0])

    mc: MonteCarlo = spec.mode
    unit, stratum_of, counts = stratified_unit_samples(spec.seed, key, dim, mc.samples, mc.strata_per_axis)
    lo = np.array([d[0] for d in dom])
    hi = np.array([d[1] for d in dom])
    pts = lo + unit * (hi - lo)
    vals = np.asarray(f(pts), dtype=complex)
    _check_samples(vals, pts)
    value, stderr = pooled_mc_estimate(vals, stratum_of, counts, volume)
    return EvalResult(value, stderr, mc.samples)


def _check_samples(vals, pts):
    bad = ~np.isfinite(vals.real) | ~np.isfinite(np.imag(vals))
    if np.any(bad):
        i = int(np.argmax(bad))
        raise IntegrandError("non-finite integrand sample", coords=tuple(pts[i]))


def adaptive_1d(f: Callable, lo: float, hi: float, *, rel_tol: float = 1e-10, abs_tol: float = 1e-12, points=None) -> float:
    """Adaptive Gauss-Kronrod integral of a real scalar function."""
    if hi <= lo:
        return 0.0
    kwargs = {"epsabs": abs_tol, "epsrel": rel_tol, "limit": 200}
    if points:
        pts = sorted(p for p in points if lo < p < hi)
        if pts:
            kwargs["points"] = pts
    val, _ = _quad(f, lo, hi, **kwargs)
    return float(val)


def admissible_radial_window(b0, bnorm, b2, x0):
    """s-window of the substituted angular integral, vectorized.

    The substitution s = r*(u) maps the admissible u-range onto an interval
    of radii 0 < s < x0:

      b^2 > 0, b0 > 0:  s in ( b^2/(2(b0+|b|)), min(x0, b^2/(2(b0-|b|))) )
      b^2 < 0        :  s in ( |b^2|/(2(|b|-b0)), x0 )   if 2 x0 > b0 + |b|

    Empty windows come back with s_lo >= s_hi.
    """
    b0 = np.asarray(b0, dtype=float)
    bnorm = np.asarray(bnorm, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    s_lo = np.full(np.broadcast_shapes(b0.shape, bnorm.shape), np.inf)
    s_hi = np.zeros_like(s_lo)

    pos = (b2 > 0.0) & (b0 > 0.0)
    if np.any(pos):
        lo = b2 / (2.0 * (b0 + bnorm))
        # b^2 > 0 and b0 > 0 imply b0 > |b|
        hi = np.minimum(x0, np.divide(b2, 2.0 * (b0 - bnorm), out=np.full_like(s_lo, np.inf), where=(b0 - bnorm) > 0))
        s_lo = np.where(pos, lo, s_lo)
        s_hi = np.where(pos, hi, s_hi)

    neg = (b2 < 0.0) & (2.0 * x0 > b0 + bnorm)
    if np.any(neg):
        lo = np.divide(-b2, 2.0 * (bnorm - b0), out=np.full_like(s_lo, np.inf), where=(bnorm - b0) > 0)
        s_lo = np.where(neg, lo, s_lo)
        s_hi = np.where(neg, x0, s_hi)
    return s_lo, s_hi


def substituted_angular_integrate(b, x0: float, h: Callable, spec: QuadSpec, *, key: tuple = ()) -> EvalResult:
    """Integral of |b^2| / (b0 + |b| u)^2 * h(u) over the admissible u-range.

    Computed through the substitution s = r*(u), which maps the singular
    weight to Lebesgue measure:  integral = (2/|b|) * int_{s_lo}^{s_hi} h(u(s)) ds.
    h must be bounded and vectorized over u.
    """
    bnorm = b.bnorm
    if bnorm <= 0.0:
        raise ValueError("substituted_angular_integrate: |b| must be > 0")
    s_lo, s_hi = admissible_radial_window(b.b0, bnorm, b.b2, float(x0))
    s_lo = float(s_lo)
    s_hi = float(s_hi)
    if not s_lo < s_hi:
        return ZERO_RESULT

    b2 = b.b2

    def u_of(s):
        return np.clip((b2 / (2.0 * s) - b.b0) / bnorm, -1.0, 1.0)

    if isinstance(spec.mode, Deterministic):
        # adaptive rule: target_rel_error is enforced here
        neval = 0

        def scalar(s, part):
            nonlocal neval
            neval += 1
            v = complex(np.asarray(h(u_of(np.asarray([s]))))[0])
            return v.real if part == 0 else v.imag

        re, _ = _quad(scalar, s_lo, s_hi, args=(0,), epsabs=1e-13, epsrel=spec.target_rel_error, limit=200)
        im, _ = _quad(scalar, s_lo, s_hi, args=(1,), epsabs=1e-13, epsrel=spec.target_rel_error, limit=200)
        return EvalResult(complex(re, im) * 2.0 / bnorm, 0.0, neval)

    def integrand(pts):
        return np.asarray(h(u_of(pts[:, 0])))

    inner = integrate([(s_lo, s_hi)], integrand, spec, key=key)
    return inner.scaled(2.0 / bnorm)
