"""Free multi-time solutions (inputs / initial data) and weighted-norm estimation.

Every constructor returns a WaveFunction whose factors solve their free
Klein-Gordon equations analytically; boundedness on the half-space keeps the
weighted norm finite.  Massive packets are finite plane-wave superpositions
only, so the free-equation guarantee carries no quadrature error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .operators import WaveFunction
from .weights import WeightFamily

__all__ = [
    "PlaneWaveProduct",
    "SphericalPacketMassless",
    "PacketSuperposition",
    "FreeSolutionSpec",
    "bump_profile",
    "make_free",
    "compact_support_free",
    "NormCloud",
    "norm_estimate",
]

MASS_SHELL_TOL = 1e-9


@dataclass(frozen=True)
class PlaneWaveProduct:
    """Product of on-shell plane waves, one 4-momentum per particle slot."""

    momenta: tuple
    masses: tuple

    def __post_init__(self):
        ks = tuple(tuple(float(c) for c in k) for k in self.momenta)
        ms = tuple(float(m) for m in self.masses)
        if len(ks) != len(ms) or len(ks) < 2:
            raise ValueError("PlaneWaveProduct: need one 4-momentum and mass per slot, arity >= 2")
        for k, m in zip(ks, ms):
            if len(k) != 4:
                raise ValueError("PlaneWaveProduct: momenta must be 4-vectors")
            shell = math.sqrt(k[1] ** 2 + k[2] ** 2 + k[3] ** 2 + m * m)
            if abs(k[0] - shell) > MASS_SHELL_TOL * max(1.0, shell):
                raise ValueError(f"PlaneWaveProduct: k0={k[0]} off the mass shell (expected {shell})")
        object.__setattr__(self, "momenta", ks)
        object.__setattr__(self, "masses", ms)


@dataclass(frozen=True)
class SphericalPacketMassless:
    """Massless spherical packets (F(t+r) - F(t-r))/r, one per slot.

    profile/dprofile are F and F'; centers are the spatial packet centers.
    The r -> 0 limit 2 F'(t) is evaluated analytically.
    """

    profile: Callable = field(compare=False)
    dprofile: Callable = field(compare=False)
    centers: tuple = ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    support_radius: float | None = None


@dataclass(frozen=True)
class PacketSuperposition:
    """Finite superposition sum_i amp_i * PlaneWaveProduct_i (common arity)."""

    terms: tuple

    def __post_init__(self):
        if not self.terms:
            raise ValueError("PacketSuperposition: at least one term")
        arities = {len(pw.momenta) for _, pw in self.terms}
        if len(arities) != 1:
            raise ValueError("PacketSuperposition: all terms must share the arity")


FreeSolutionSpec = PlaneWaveProduct | SphericalPacketMassless | PacketSuperposition


def bump_profile(radius: float):
    """Smooth bump supported on (0, radius), with analytic derivative.

    F(s) = exp(-1/(1 - z^2)), z = 2 s/radius - 1.  Returns (F, F').
    """
    R = float(radius)

    def F(s):
        s = np.asarray(s, dtype=float)
        z = 2.0 * s / R - 1.0
        inside = np.abs(z) < 1.0
        zz = np.where(inside, z, 0.0)
        with np.errstate(divide="ignore", over="ignore"):
            vals = np.exp(-1.0 / (1.0 - zz * zz))
        return np.where(inside, vals, 0.0)

    def dF(s):
        s = np.asarray(s, dtype=float)
        z = 2.0 * s / R - 1.0
        inside = np.abs(z) < 1.0
        zz = np.where(inside, z, 0.0)
        with np.errstate(divide="ignore", over="ignore"):
            vals = np.exp(-1.0 / (1.0 - zz * zz)) * (-2.0 * zz / (1.0 - zz * zz) ** 2) * (2.0 / R)
        return np.where(inside, vals, 0.0)

    return F, dF


def _plane_wave_fn(spec: PlaneWaveProduct):
    ks = [np.asarray(k) for k in spec.momenta]

    def fn(*slots):
        out = None
        for k, pts in zip(ks, slots):
            pts = np.asarray(pts, dtype=float)
            phase = k[0] * pts[:, 0] - pts[:, 1:] @ k[1:]
            term = np.exp(-1j * phase)
            out = term if out is None else out * term
        return out

    return fn


def _packet_factor(F, dF, center, t, pos):
    r = np.linalg.norm(pos - np.asarray(center), axis=-1)
    small = r < 1e-6
    r_safe = np.where(small, 1.0, r)
    vals = (F(t + r_safe) - F(t - r_safe)) / r_safe
    return np.where(small, 2.0 * dF(t), vals)


def _packet_fn(spec: SphericalPacketMassless):
    def fn(*slots):
        out = None
        for center, pts in zip(spec.centers, slots):
            pts = np.asarray(pts, dtype=float)
            term = _packet_factor(spec.profile, spec.dprofile, center, pts[:, 0], pts[:, 1:])
            out = term.astype(complex) if out is None else out * term
        return out

    return fn


def make_free(spec: FreeSolutionSpec) -> WaveFunction:
    """Build the evaluatable free solution for a spec."""
    if isinstance(spec, PlaneWaveProduct):
        return WaveFunction(len(spec.momenta), _plane_wave_fn(spec), descriptor="free:plane-wave-product")
    if isinstance(spec, SphericalPacketMassless):
        return WaveFunction(
            len(spec.centers),
            _packet_fn(spec),
            descriptor="free:spherical-packet",
            support_radius=spec.support_radius,
        )
    if isinstance(spec, PacketSuperposition):
        arity = len(spec.terms[0][1].momenta)
        fns = [(complex(amp), _plane_wave_fn(pw)) for amp, pw in spec.terms]

        def fn(*slots):
            total = fns[0][0] * fns[0][1](*slots)
            for amp, f in fns[1:]:
                total = total + amp * f(*slots)
            return total

        return WaveFunction(arity, fn, descriptor="free:packet-superposition")
    raise TypeError(f"make_free: unknown spec {type(spec)!r}")


def compact_support_free(radius: float, profile=None) -> WaveFunction:
    """Massless product packet with Cauchy data supported in balls of `radius`.

    Strong Huygens holds for the spherical form: the solution is exactly zero
    outside the grown light cone |x| > radius + t in either slot.
    """
    if radius <= 0.0:
        raise ValueError("compact_support_free: radius must be > 0")
    if profile is None:
        F, dF = bump_profile(radius)
    else:
        F, dF = profile
    spec = SphericalPacketMassless(profile=F, dprofile=dF, support_radius=float(radius))
    return make_free(spec)


@dataclass(frozen=True)
class NormCloud:
    """Sampling cloud for weighted-norm estimation: log-spaced times crossed
    with low-discrepancy spatial points in a ball."""

    time_horizon: float = 2.0
    n_times: int = 10
    n_spatial: int = 24
    radius: float = 2.0
    seed: int = 0


def _ball_points(n, radius, seed, dim_offset=0):
    eng = qmc.Halton(d=3, seed=seed + dim_offset)
    u = eng.random(n)
    # radius ~ cbrt for uniform ball density
    r = radius * np.cbrt(u[:, 0])
    c = 2.0 * u[:, 1] - 1.0
    phi = 2.0 * math.pi * u[:, 2]
    s = np.sqrt(1.0 - c * c)
    return np.stack([r * s * np.cos(phi), r * s * np.sin(phi), r * c], axis=-1)


def norm_estimate(psi: WaveFunction, family: WeightFamily, cloud: NormCloud) -> float:
    """Lower-bound estimate of ||psi||_g by maximizing |psi| / prod g over a cloud."""
    times = np.concatenate([[0.0], np.geomspace(cloud.time_horizon * 1e-3, cloud.time_horizon, cloud.n_times - 1)])
    weights = np.asarray(family.weight(times), dtype=float)
    best = 0.0
    spatial = [_ball_points(cloud.n_spatial, cloud.radius, cloud.seed, 7 * k) for k in range(psi.arity)]
    # all time combinations, one spatial draw per slot reused across them
    time_grids = np.meshgrid(*([np.arange(len(times))] * psi.arity), indexing="ij")
    combos = np.stack([g.ravel() for g in time_grids], axis=-1)
    n_sp = cloud.n_spatial
    for combo in combos:
        slots = []
        denom = 1.0
        for slot_idx, ti in enumerate(combo):
            pts = np.empty((n_sp, 4))
            pts[:, 0] = times[ti]
            pts[:, 1:] = spatial[slot_idx]
            slots.append(pts)
            denom *= weights[ti]
        vals = np.abs(np.asarray(psi.eval(*slots)))
        best = max(best, float(vals.max()) / denom)
    return best
