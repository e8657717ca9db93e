"""Pointwise evaluation of the reduced light-cone integral operators.

The two-particle operator splits as A = A0 + A1 + A2 + A12 (massless,
two mixed mass terms, mass-mass term).  Each piece is evaluated at a single
argument pair by quadrature over its delta-reduced integral form:

  A0   5-dim: ball y', azimuth phi of x', and the angular variable u = cos
       theta traded for the radius s = r*(u) (the substitution removes the
       squared-denominator singularity exactly).
  A1   6-dim over (y', x') in nested spherical coordinates whose Jacobians
       cancel the 1/|y-y'| and 1/|x'-y'| weights; two retarded/advanced
       branches for the interior time.
  A2   mirror image of A1 under (slot 1, m1) <-> (slot 2, m2).
  A12  7-dim over (x'0, x', y'0, angles of z), with |z| pinned to |x'0-y'0|
       by the resolved light-cone delta (spherical measure sin-theta).

Monte Carlo mode stratifies the angular axes and keeps Gauss-Legendre grids
on the radial/substituted axes; deterministic mode tensorizes throughout.
Sample streams are derived from (seed, operator, operand level, argument
point), so results are reproducible and linear in the integrand under
common seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .geometry import SpacetimePoint
from .quadrature import (
    Deterministic,
    EvalResult,
    IntegrandError,
    MonteCarlo,
    QuadSpec,
    ZERO_RESULT,
    admissible_radial_window,
    gauss_legendre,
    gl_nodes,
    midpoint_nodes,
    point_key,
    pooled_mc_estimate,
    stratified_unit_samples,
)
from .specfun import bessel_j1_ratio
from .weights import Flrw, WeightFamily

__all__ = [
    "ModelConfig",
    "WaveFunction",
    "WaveFunctionError",
    "constant_wave",
    "a0_apply",
    "a1_apply",
    "a2_apply",
    "a12_apply",
    "a_apply",
    "a0_flrw_apply",
    "chi_transform",
    "chi_inverse",
    "npart_apply",
    "npart_apply_total",
]

FOUR_PI_CUBED = (4.0 * math.pi) ** 3

# Gauss-Legendre orders on the radial / substituted axes (MC mode keeps
# these deterministic and plays Monte Carlo only on the angles).
RADIAL_NODES = 8
SUBST_NODES = 8
ANGLE_CHUNK = 2048

_TAG_A0 = 1
_TAG_A1 = 2
_TAG_A12 = 4


class WaveFunctionError(RuntimeError):
    """Wave-function evaluation failure, carrying the first offending point."""


@dataclass(frozen=True)
class ModelConfig:
    """Coupling, masses, weight family and quadrature budget."""

    lam: float
    m1: float
    m2: float
    weight: WeightFamily
    quad: QuadSpec

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0.0):
            raise ValueError("ModelConfig: lambda must be finite and > 0")
        if not (np.isfinite(self.m1) and np.isfinite(self.m2) and self.m1 >= 0.0 and self.m2 >= 0.0):
            raise ValueError("ModelConfig: masses must be finite and >= 0")


class WaveFunction:
    """Evaluatable complex field on tuples of spacetime points.

    fn maps `arity` arrays of shape (n, 4) to a complex array of shape (n,).
    `level` tags Neumann stages for seed derivation (free solutions are 0).
    Evaluation must be pure: same inputs, same outputs.
    """

    def __init__(self, arity: int, fn: Callable, descriptor: str = "", level: int = 0, support_radius=None):
        if arity < 2:
            raise ValueError("WaveFunction: arity must be >= 2")
        self.arity = arity
        self.fn = fn
        self.descriptor = descriptor
        self.level = level
        self.support_radius = support_radius

    def eval(self, *slots) -> np.ndarray:
        if len(slots) != self.arity:
            raise ValueError(f"WaveFunction: expected {self.arity} slots, got {len(slots)}")
        try:
            vals = self.fn(*slots)
        except ZeroDivisionError:
            raise  # deliberate signal (inverse conformal transform at eta = 0)
        except Exception as exc:  # re-raise with the first coordinates attached
            first = tuple(np.asarray(slots[0])[0]) if len(np.asarray(slots[0])) else ()
            raise WaveFunctionError(f"evaluation failed near slot-0 point {first}: {exc}") from exc
        return np.asarray(vals, dtype=complex)

    def at(self, *points: SpacetimePoint) -> complex:
        slots = [p.four()[None, :] for p in points]
        return complex(self.eval(*slots)[0])

    def transposed(self) -> "WaveFunction":
        if self.arity != 2:
            raise ValueError("transposed: arity-2 only")
        return WaveFunction(2, lambda xs, ys: self.fn(ys, xs), descriptor=self.descriptor + ":swapped", level=self.level)


def constant_wave(arity: int = 2, value: complex = 1.0) -> WaveFunction:
    val = complex(value)

    def fn(*slots):
        return np.full(np.asarray(slots[0]).shape[0], val, dtype=complex)

    return WaveFunction(arity, fn, descriptor=f"constant:{value}")


def _orthonormal_frame(axis: np.ndarray):
    """Right-handed completion (e1, e2) of unit vectors `axis` (vectorized)."""
    axis = np.asarray(axis, dtype=float)
    ref = np.zeros_like(axis)
    use_x = np.abs(axis[..., 0]) < 0.9
    ref[..., 0] = np.where(use_x, 1.0, 0.0)
    ref[..., 1] = np.where(use_x, 0.0, 1.0)
    e1 = ref - axis * np.sum(ref * axis, axis=-1, keepdims=True)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(axis, e1)
    return e1, e2


def _unit_from_angles(c, phi, axis, e1, e2):
    s = np.sqrt(np.clip(1.0 - c * c, 0.0, None))
    return (
        c[..., None] * axis
        + s[..., None] * (np.cos(phi)[..., None] * e1 + np.sin(phi)[..., None] * e2)
    )


def _angular_samples(spec: QuadSpec, key: tuple, dim: int):
    """Angle samples on the unit cube plus (weights | strata bookkeeping).

    Deterministic: tensor of Gauss-Legendre x midpoint nodes (midpoint on the
    periodic axes).  MC: stratified uniforms.
    Returns (unit_points, weights, stratum_of, counts, volume); for the
    deterministic branch stratum_of/counts are None and weights integrate to
    the cube volume 1.
    """
    if isinstance(spec.mode, Deterministic):
        n = spec.mode.points_per_axis
        axes = []
        # first axis is a cosine (GL), remaining are periodic (midpoint)
        x, w = gauss_legendre(n)
        axes.append(((x + 1.0) / 2.0, w / 2.0))
        for _ in range(dim - 1):
            xm, wm = midpoint_nodes(n, 0.0, 1.0)
            axes.append((xm, wm))
        grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        wts = np.ones(pts.shape[0])
        for wg in wgrids:
            wts = wts * wg.ravel()
        return pts, wts, None, None
    mc: MonteCarlo = spec.mode
    pts, stratum_of, counts = stratified_unit_samples(spec.seed, key, dim, mc.samples, mc.strata_per_axis)
    return pts, None, stratum_of, counts


def _reduce_angular(pervals: np.ndarray, wts, stratum_of, counts) -> tuple[complex, float]:
    """Combine per-angle-sample values into (value, stderr)."""
    if wts is not None:
        return complex(np.sum(wts * pervals)), 0.0
    return pooled_mc_estimate(pervals, stratum_of, counts, 1.0)


def _apply_scale(vals, scale, ts_x, ts_y):
    if scale is None:
        return vals
    return vals * np.asarray(scale(ts_x)) * np.asarray(scale(ts_y))


def _a0_core(cfg: ModelConfig, psi: WaveFunction, x: SpacetimePoint, y: SpacetimePoint, scale) -> EvalResult:
    x0, y0 = x.t, y.t
    if x0 <= 0.0 or y0 <= 0.0:
        return ZERO_RESULT
    if psi.arity != 2:
        raise ValueError("a0_apply: arity-2 wave function required")
    xs3, ys3 = x.spatial(), y.spatial()
    dxy = xs3 - ys3
    d = float(np.linalg.norm(dxy))
    dt = x0 - y0
    if d == 0.0 and dt == 0.0:
        # coincident arguments: b^2 vanishes identically, no admissible root
        return ZERO_RESULT
    if d > 0.0:
        e_axis = dxy / d
    else:
        e_axis = np.array([0.0, 0.0, 1.0])
    p_hat, q_hat = _orthonormal_frame(e_axis[None, :])
    p_hat, q_hat = p_hat[0], q_hat[0]

    key = (_TAG_A0, psi.level, point_key(x.four(), y.four()))
    unit, wts, stratum_of, counts = _angular_samples(cfg.quad, key, 3)
    n_ang = unit.shape[0]

    itv = dt * dt - d * d
    s_ref, ws_ref = gauss_legendre(SUBST_NODES)

    pervals = np.empty(n_ang, dtype=complex)
    used = 0
    for start in range(0, n_ang, ANGLE_CHUNK):
        sl = slice(start, min(start + ANGLE_CHUNK, n_ang))
        u3 = unit[sl]
        m = u3.shape[0]
        c_y = 2.0 * u3[:, 0] - 1.0
        phi_y = 2.0 * math.pi * u3[:, 1]
        phi = 2.0 * math.pi * u3[:, 2]

        n_y = _unit_from_angles(c_y, phi_y, e_axis, p_hat, q_hat)          # (m, 3)
        # b^2 is linear in rho and jumps the s-window at its root; split the
        # radial integral there so each Gauss panel sees a smooth integrand
        dproj = n_y @ dxy                                                  # (m,)
        den = 2.0 * (dt + dproj)
        with np.errstate(divide="ignore", invalid="ignore"):
            rho_cross = np.where(den != 0.0, -itv / np.where(den != 0.0, den, 1.0), np.inf)
        split = np.where((rho_cross > 0.0) & (rho_cross < y0), rho_cross, y0)
        zeros = np.zeros(m)
        rho1, w1 = gl_nodes(RADIAL_NODES, zeros, split)                    # (m, R)
        rho2, w2 = gl_nodes(RADIAL_NODES, split, np.full(m, y0))
        rho = np.concatenate([rho1, rho2], axis=1)                        # (m, 2R)
        w_rho = np.concatenate([w1, w2], axis=1)

        yp = rho[:, :, None] * n_y[:, None, :]                             # (m, 2R, 3)
        b0 = dt + rho                                                      # (m, 2R)
        bvec = dxy[None, None, :] - yp
        bn = np.linalg.norm(bvec, axis=-1)
        b2 = b0**2 - bn**2

        s_lo, s_hi = admissible_radial_window(b0, bn, b2, x0)
        width = np.clip(s_hi - s_lo, 0.0, None)
        active = width > 0.0
        inv2bn = np.where(active & (bn > 0.0), 0.5 / np.where(bn > 0.0, bn, 1.0), 0.0)

        half = 0.5 * width
        mid = np.where(active, 0.5 * (s_hi + s_lo), 0.5)
        s = mid[..., None] + half[..., None] * s_ref                       # (m, R, S)
        w_s = half[..., None] * ws_ref

        with np.errstate(divide="ignore", invalid="ignore"):
            u_ang = (b2[..., None] / (2.0 * s) - b0[..., None]) / np.where(bn[..., None] > 0.0, bn[..., None], 1.0)
        u_ang = np.clip(np.where(active[..., None], u_ang, 0.0), -1.0, 1.0)

        bhat = bvec / np.where(bn[..., None] > 0.0, bn[..., None], 1.0)
        e1, e2 = _orthonormal_frame(bhat)
        sin_ang = np.sqrt(np.clip(1.0 - u_ang**2, 0.0, None))
        dir_x = (
            u_ang[..., None] * bhat[:, :, None, :]
            + sin_ang[..., None]
            * (np.cos(phi)[:, None, None, None] * e1[:, :, None, :] + np.sin(phi)[:, None, None, None] * e2[:, :, None, :])
        )                                                                   # (m, 2R, S, 3)
        xp = s[..., None] * dir_x

        flat = m * 2 * RADIAL_NODES * SUBST_NODES
        xs4 = np.empty((flat, 4))
        ys4 = np.empty((flat, 4))
        xs4[:, 0] = (x0 - s).ravel()
        xs4[:, 1:] = (xs3[None, None, None, :] + xp).reshape(flat, 3)
        ys4[:, 0] = np.broadcast_to((y0 - rho)[..., None], s.shape).ravel()
        ys4[:, 1:] = np.broadcast_to(ys3[None, None, None, :] + yp[:, :, None, :], xp.shape).reshape(flat, 3)

        vals = psi.eval(xs4, ys4)
        _guard_finite(vals, xs4)
        vals = _apply_scale(vals, scale, xs4[:, 0], ys4[:, 0])
        vals = vals.reshape(m, 2 * RADIAL_NODES, SUBST_NODES)

        inner = np.sum(w_s * vals, axis=2)                                  # (m, 2R)
        pervals[sl] = np.sum(w_rho * rho * inv2bn * inner, axis=1)
        used += flat

    value, stderr = _reduce_angular(pervals, wts, stratum_of, counts)
    # angle cube volume (2)(2pi)(2pi) = 8 pi^2 folded into the prefactor
    pref = cfg.lam / FOUR_PI_CUBED * 8.0 * math.pi**2
    return EvalResult(value * pref, stderr * pref, used)


def _guard_finite(vals, coords):
    bad = ~np.isfinite(vals.real) | ~np.isfinite(vals.imag)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise IntegrandError("non-finite wave-function sample", coords=tuple(coords[i]))


def a0_apply(cfg: ModelConfig, psi: WaveFunction, x: SpacetimePoint, y: SpacetimePoint) -> EvalResult:
    """Massless operator at (x, y): 3-dim ball, azimuth, and substituted angle."""
    return _a0_core(cfg, psi, x, y, scale=None)


def a0_flrw_apply(cfg: ModelConfig, psi: WaveFunction, x: SpacetimePoint, y: SpacetimePoint,
                  scale_factor: Callable | None = None) -> EvalResult:
    """Conformally rescaled massless operator: extra a(eta1') a(eta2') factor.

    The scale function defaults to the Flrw weight's; an explicit override
    allows reduction checks (a == 1 reproduces a0_apply bit-exactly because
    the sampling is identical).
    """
    if scale_factor is None:
        if not isinstance(cfg.weight, Flrw):
            raise ValueError("a0_flrw_apply: cfg.weight must be the Flrw family")
        scale_factor = cfg.weight.scale_factor
    return _a0_core(cfg, psi, x, y, scale=scale_factor)


def _a1_core(cfg: ModelConfig, psi: WaveFunction, x: SpacetimePoint, y: SpacetimePoint, mass: float) -> EvalResult:
    x0, y0 = x.t, y.t
    if mass == 0.0:
        return ZERO_RESULT
    if x0 <= 0.0 or y0 <= 0.0:
        return ZERO_RESULT
    if psi.arity != 2:
        raise ValueError("a1_apply: arity-2 wave function required")
    xs3, ys3 = x.spatial(), y.spatial()

    key = (_TAG_A1, psi.level, point_key(x.four(), y.four()))
    # angles: (c_y, phi_y, c_z, phi_z); radial GL: rho_y, rho_z
    unit, wts, stratum_of, counts = _angular_samples_4(cfg.quad, key)
    n_ang = unit.shape[0]

    s_ref_y, w_ref_y = gauss_legendre(RADIAL_NODES)
    s_ref_z, w_ref_z = gauss_legendre(SUBST_NODES)

    pervals = np.empty(n_ang, dtype=complex)
    used = 0
    for start in range(0, n_ang, ANGLE_CHUNK):
        sl = slice(start, min(start + ANGLE_CHUNK, n_ang))
        u4 = unit[sl]
        m = u4.shape[0]
        c_y = 2.0 * u4[:, 0] - 1.0
        phi_y = 2.0 * math.pi * u4[:, 1]
        c_z = 2.0 * u4[:, 2] - 1.0
        phi_z = 2.0 * math.pi * u4[:, 3]
        zhat = np.array([0.0, 0.0, 1.0])
        e1z = np.array([1.0, 0.0, 0.0])
        e2z = np.array([0.0, 1.0, 0.0])
        n_y = _unit_from_angles(c_y, phi_y, zhat, e1z, e2z)   # (m, 3)
        n_z = _unit_from_angles(c_z, phi_z, zhat, e1z, e2z)

        total = np.zeros(m, dtype=complex)
        for branch in (+1, -1):
            lo_y = max(0.0, y0 - x0) if branch == +1 else 0.0
            if lo_y >= y0:
                continue
            rho_y = 0.5 * (y0 + lo_y) + 0.5 * (y0 - lo_y) * s_ref_y        # (Ry,)
            w_y = 0.5 * (y0 - lo_y) * w_ref_y
            yprime0 = y0 - rho_y                                            # (Ry,)

            yp = ys3[None, None, :] + rho_y[None, :, None] * n_y[:, None, :]  # (m, Ry, 3)
            w_vec = xs3[None, None, :] - yp
            wn = np.linalg.norm(w_vec, axis=-1)                              # (m, Ry)
            W = np.einsum("mrk,mk->mr", w_vec, n_z)
            T = np.broadcast_to(x0 - yprime0, wn.shape)                      # (m, Ry)

            # the past-cone condition of slot 1 cuts an exact rho_z interval:
            # slack is monotone in rho_z, its root solves a linear equation
            if branch == +1:
                exists = (T > 0.0) & (wn < T)
                den = W - T
                with np.errstate(divide="ignore", invalid="ignore"):
                    root = np.where(den != 0.0, (wn**2 - T**2) / (2.0 * np.where(den != 0.0, den, 1.0)), np.inf)
                z_lo = np.zeros_like(wn)
                z_hi = np.where(exists, np.minimum(root, T), 0.0)
            else:
                cap = np.broadcast_to(yprime0, wn.shape)
                den = W + T
                with np.errstate(divide="ignore", invalid="ignore"):
                    root = np.where(den > 0.0, (wn**2 - T**2) / (2.0 * np.where(den > 0.0, den, 1.0)), np.inf)
                z_lo = np.where(T - wn >= 0.0, 0.0, root)
                z_hi = cap
            width = np.clip(z_hi - z_lo, 0.0, None)
            z_lo = np.where(width > 0.0, z_lo, 0.0)
            half_z = 0.5 * width
            rho_z = (z_lo + half_z)[..., None] + half_z[..., None] * s_ref_z  # (m, Ry, S)
            w_z = half_z[..., None] * w_ref_z

            xp = yp[:, :, None, :] + rho_z[..., None] * n_z[:, None, None, :]  # (m, Ry, S, 3)
            xprime0 = np.broadcast_to(yprime0[None, :, None], rho_z.shape) + branch * rho_z

            dist_x = np.linalg.norm(xs3[None, None, None, :] - xp, axis=-1)
            reach = x0 - xprime0
            ind = (reach - dist_x) >= 0.0
            s1_sq = np.clip(reach**2 - dist_x**2, 0.0, None)
            kern = bessel_j1_ratio(mass * np.sqrt(s1_sq)) * ind * (xprime0 >= 0.0)

            flat = m * RADIAL_NODES * SUBST_NODES
            xs4 = np.empty((flat, 4))
            ys4 = np.empty((flat, 4))
            xs4[:, 0] = xprime0.ravel()
            xs4[:, 1:] = xp.reshape(flat, 3)
            ys4[:, 0] = np.broadcast_to(yprime0[None, :, None], rho_z.shape).ravel()
            ys4[:, 1:] = np.broadcast_to(yp[:, :, None, :], xp.shape).reshape(flat, 3)
            vals = psi.eval(xs4, ys4)
            _guard_finite(vals, xs4)
            vals = vals.reshape(m, RADIAL_NODES, SUBST_NODES)

            inner = np.sum(w_z * rho_z * kern * vals, axis=2)
            total += np.sum(w_y * rho_y * inner, axis=1)
            used += flat
        pervals[sl] = total

    value, stderr = _reduce_angular(pervals, wts, stratum_of, counts)
    # angular cube volume (2)(2pi)(2)(2pi) = 16 pi^2
    pref = -cfg.lam * mass**2 / (2.0 * FOUR_PI_CUBED) * 16.0 * math.pi**2
    return EvalResult(value * pref, stderr * abs(pref), used)


def _angular_samples_4(spec: QuadSpec, key: tuple):
    """Four angle axes: cosines on GL nodes, azimuths on midpoint nodes."""
    if isinstance(spec.mode, Deterministic):
        n = spec.mode.points_per_axis
        x, w = gauss_legendre(n)
        cos_axis = ((x + 1.0) / 2.0, w / 2.0)
        per_axis = midpoint_nodes(n, 0.0, 1.0)
        axes = [cos_axis, per_axis, cos_axis, per_axis]
        grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        wts = np.ones(pts.shape[0])
        for wg in wgrids:
            wts = wts * wg.ravel()
        return pts, wts, None, None
    mc: MonteCarlo = spec.mode
    pts, stratum_of, counts = stratified_unit_samples(spec.seed, key, 4, mc.samples, mc.strata_per_axis)
    return pts, None, stratum_of, counts


def a1_apply(cfg: ModelConfig, psi: WaveFunction, x: SpacetimePoint, y: SpacetimePoint) -> EvalResult:
    """Mixed term carrying m1: Bessel kernel in slot 1, retarded cone in slot 2."""
    return _a1_core(cfg, psi, x, y, cfg.m1)


def a2_apply(cfg: ModelConfig, psi: WaveFunction, x: SpacetimePoint, y: SpacetimePoint) -> EvalResult:
    """Mirror image of a1_apply under (x, m1) <-> (y, m2)."""
    return _a1_core(cfg, psi.transposed(), y, x, cfg.m2)


def a12_apply(cfg: ModelConfig, psi: WaveFunction, x: SpacetimePoint, y: SpacetimePoint) -> EvalResult:
    """Mass-mass term: 7-dim integral with |z| pinned by the light-cone delta."""
    x0, y0 = x.t, y.t
    if cfg.m1 == 0.0 or cfg.m2 == 0.0:
        return ZERO_RESULT
    if x0 <= 0.0 or y0 <= 0.0:
        return ZERO_RESULT
    if psi.arity != 2:
        raise ValueError("a12_apply: arity-2 wave function required")
    xs3, ys3 = x.spatial(), y.spatial()
    key = (_TAG_A12, psi.level, point_key(x.four(), y.four()))

    spec = cfg.quad
    if isinstance(spec.mode, Deterministic):
        n = spec.mode.points_per_axis
        x_gl, w_gl = gauss_legendre(n)
        lin = ((x_gl + 1.0) / 2.0, w_gl / 2.0)
        per = midpoint_nodes(n, 0.0, 1.0)
        axes = [lin, lin, lin, per, lin, lin, per]
        grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
        unit = np.stack([g.ravel() for g in grids], axis=-1)
        wts = np.ones(unit.shape[0])
        for wg in wgrids:
            wts = wts * wg.ravel()
        stratum_of = counts = None
    else:
        mc: MonteCarlo = spec.mode
        unit, stratum_of, counts = stratified_unit_samples(spec.seed, key, 7, mc.samples, mc.strata_per_axis)
        wts = None

    n_tot = unit.shape[0]
    pervals = np.empty(n_tot, dtype=complex)
    used = 0
    for start in range(0, n_tot, ANGLE_CHUNK):
        sl = slice(start, min(start + ANGLE_CHUNK, n_tot))
        u7 = unit[sl]
        m = u7.shape[0]
        xprime0 = x0 * u7[:, 0]
        Rx = x0 - xprime0
        rho_x = Rx * u7[:, 1]
        c_x = 2.0 * u7[:, 2] - 1.0
        phi_x = 2.0 * math.pi * u7[:, 3]
        yprime0 = y0 * u7[:, 4]
        c_z = 2.0 * u7[:, 5] - 1.0
        phi_z = 2.0 * math.pi * u7[:, 6]

        zhat = np.array([0.0, 0.0, 1.0])
        e1z = np.array([1.0, 0.0, 0.0])
        e2z = np.array([0.0, 1.0, 0.0])
        n_x = _unit_from_angles(c_x, phi_x, zhat, e1z, e2z)
        n_z = _unit_from_angles(c_z, phi_z, zhat, e1z, e2z)

        xp = xs3[None, :] + rho_x[:, None] * n_x
        dz = np.abs(xprime0 - yprime0)
        ypvec = xp - dz[:, None] * n_z
        dist_y = np.linalg.norm(ys3[None, :] - ypvec, axis=-1)
        ind = (y0 - yprime0 - dist_y) >= 0.0

        s1 = np.sqrt(np.clip((x0 - xprime0) ** 2 - rho_x**2, 0.0, None))
        s2 = np.sqrt(np.clip((y0 - yprime0) ** 2 - dist_y**2, 0.0, None))
        kern = bessel_j1_ratio(cfg.m1 * s1) * bessel_j1_ratio(cfg.m2 * s2) * ind

        xs4 = np.empty((m, 4))
        ys4 = np.empty((m, 4))
        xs4[:, 0] = xprime0
        xs4[:, 1:] = xp
        ys4[:, 0] = yprime0
        ys4[:, 1:] = ypvec
        vals = psi.eval(xs4, ys4)
        _guard_finite(vals, xs4)

        # per-sample Jacobian of the (x'0, rho_x, y'0) maps; angles carry 2, 2pi
        jac = x0 * Rx * y0
        pervals[sl] = jac * rho_x**2 * dz * kern * vals
        used += m

    value, stderr = _reduce_angular(pervals, wts, stratum_of, counts)
    # angle cube volume: (2)(2pi) for x' direction, (2)(2pi) for z direction
    pref = cfg.lam * cfg.m1**2 * cfg.m2**2 / (2.0 * FOUR_PI_CUBED) * 16.0 * math.pi**2
    return EvalResult(value * pref, stderr * pref, used)


def a_apply(cfg: ModelConfig, psi: WaveFunction, x: SpacetimePoint, y: SpacetimePoint) -> EvalResult:
    """Full operator A = A0 + A1 + A2 + A12; stderr combined in quadrature."""
    total = a0_apply(cfg, psi, x, y)
    total = total + a1_apply(cfg, psi, x, y)
    total = total + a2_apply(cfg, psi, x, y)
    total = total + a12_apply(cfg, psi, x, y)
    return total


def chi_transform(a: Callable, psi: WaveFunction) -> WaveFunction:
    """Conformal transform chi(x, y) = a(eta1) a(eta2) psi(x, y)."""
    if psi.arity != 2:
        raise ValueError("chi_transform: arity-2 only")

    def fn(xs, ys):
        return psi.fn(xs, ys) * np.asarray(a(np.asarray(xs)[:, 0])) * np.asarray(a(np.asarray(ys)[:, 0]))

    return WaveFunction(2, fn, descriptor=psi.descriptor + ":chi", level=psi.level)


def chi_inverse(a: Callable, chi: WaveFunction) -> WaveFunction:
    """Inverse transform psi = chi / (a(eta1) a(eta2)); singular at a(eta) = 0."""
    if chi.arity != 2:
        raise ValueError("chi_inverse: arity-2 only")

    def fn(xs, ys):
        a1 = np.asarray(a(np.asarray(xs)[:, 0]), dtype=float)
        a2 = np.asarray(a(np.asarray(ys)[:, 0]), dtype=float)
        if np.any(a1 == 0.0) or np.any(a2 == 0.0):
            raise ZeroDivisionError("chi_inverse: scale factor vanishes at requested conformal time")
        return chi.fn(xs, ys) / (a1 * a2)

    return WaveFunction(2, fn, descriptor=chi.descriptor + ":inv-chi", level=chi.level)


def _pair_view(psi: WaveFunction, pair: tuple[int, int], points) -> WaveFunction:
    i, j = pair
    if psi.arity == 2 and (i, j) == (0, 1):
        return psi
    fixed = [p.four() for p in points]

    def fn(us, vs):
        n = np.asarray(us).shape[0]
        slots = []
        for slot_idx in range(psi.arity):
            if slot_idx == i:
                slots.append(us)
            elif slot_idx == j:
                slots.append(vs)
            else:
                slots.append(np.broadcast_to(fixed[slot_idx], (n, 4)))
        return psi.fn(*slots)

    return WaveFunction(2, fn, descriptor=f"{psi.descriptor}:pair({i},{j})", level=psi.level)


def npart_apply(cfg: ModelConfig, psi: WaveFunction, pair: tuple[int, int], points) -> EvalResult:
    """Two-particle operator applied in slots (i, j); other slots held fixed.

    cfg carries the pair's masses (m1 = mass_i, m2 = mass_j).
    """
    i, j = pair
    if not (0 <= i < j < psi.arity):
        raise ValueError("npart_apply: need 0 <= i < j < arity")
    if len(points) != psi.arity:
        raise ValueError("npart_apply: one point per slot required")
    view = _pair_view(psi, pair, points)
    return a_apply(cfg, view, points[i], points[j])


def npart_apply_total(cfg: ModelConfig, masses, psi: WaveFunction, points) -> EvalResult:
    """Sum of the pairwise operators over all i < j."""
    masses = [float(m) for m in masses]
    if len(masses) != psi.arity:
        raise ValueError("npart_apply_total: one mass per slot required")
    total = ZERO_RESULT
    for i in range(psi.arity):
        for j in range(i + 1, psi.arity):
            pair_cfg = replace(cfg, m1=masses[i], m2=masses[j])
            total = total + npart_apply(pair_cfg, psi, (i, j), points)
    return total
