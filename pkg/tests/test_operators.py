import math
from dataclasses import replace

import numpy as np
import pytest

from lightcone.fields import PlaneWaveProduct, make_free
from lightcone.geometry import SpacetimePoint
from lightcone.operators import (
    ModelConfig,
    WaveFunction,
    WaveFunctionError,
    a0_apply,
    a0_flrw_apply,
    a1_apply,
    a2_apply,
    a12_apply,
    a_apply,
    chi_inverse,
    chi_transform,
    constant_wave,
    npart_apply,
    npart_apply_total,
)
from lightcone.quadrature import Deterministic, IntegrandError, MonteCarlo, QuadSpec
from lightcone.weights import GaussPoly, g_eval

from . import frozen, oracles

P = SpacetimePoint
ONE = constant_wave(2, 1.0)


def cfg_of(lam=1.0, m1=0.0, m2=0.0, samples=512, seed=11, strata=2):
    return ModelConfig(lam, m1, m2, GaussPoly(1.0), QuadSpec(MonteCarlo(samples, strata), seed=seed))


X = P(1.0, (0.0, 0.0, 0.0))
Y = P(0.8, (0.3, 0.0, 0.0))


def test_zero_wavefunction_gives_zero():
    res = a_apply(cfg_of(m1=1.0, m2=1.0), constant_wave(2, 0.0), X, Y)
    assert res.value == 0.0 and res.stderr == 0.0


def test_empty_domain_short_circuits():
    cfg = cfg_of(m1=1.0, m2=0.5)
    zero_t = P(0.0, (0.0, 0.0, 0.0))
    for op in (a0_apply, a1_apply, a2_apply, a12_apply, a_apply):
        assert op(cfg, ONE, zero_t, Y).value == 0.0
        assert op(cfg, ONE, X, zero_t).value == 0.0
        assert op(cfg, ONE, zero_t, zero_t) .value == 0.0


def test_coincident_arguments_give_exact_zero():
    res = a0_apply(cfg_of(), ONE, X, X)
    assert res.value == 0.0 and res.stderr == 0.0 and res.samples_used == 0


def test_mass_prefactors():
    cfg = cfg_of(m1=0.0, m2=1.0)
    assert a1_apply(cfg, ONE, X, Y).value == 0.0
    assert a12_apply(cfg, ONE, X, Y).value == 0.0
    cfg = cfg_of(m1=1.0, m2=0.0)
    assert a2_apply(cfg, ONE, X, Y).value == 0.0
    assert a12_apply(cfg, ONE, X, Y).value == 0.0


def test_massless_a_equals_a0():
    cfg = cfg_of()
    assert a_apply(cfg, ONE, X, Y).value == a0_apply(cfg, ONE, X, Y).value


def test_linearity_in_psi_bit_exact():
    cfg = cfg_of(m1=1.0, m2=0.5, samples=256)
    one = a_apply(cfg, ONE, X, Y)
    two = a_apply(cfg, constant_wave(2, 2.0), X, Y)
    assert two.value == 2.0 * one.value


def test_linearity_in_lambda_bit_exact():
    base = a_apply(cfg_of(lam=0.5, m1=1.0, m2=0.5, samples=256), ONE, X, Y)
    quad = a_apply(cfg_of(lam=2.0, m1=1.0, m2=0.5, samples=256), ONE, X, Y)
    assert quad.value == 4.0 * base.value


def test_a2_is_mirror_of_a1():
    psi = ONE  # symmetric
    c12 = cfg_of(m1=0.7, m2=0.7, samples=256)
    assert a2_apply(c12, psi, X, Y).value == a1_apply(c12, psi, Y, X).value


def test_a0_matches_frozen_shell_oracle():
    x4, y4 = oracles.A0_POINTS[1]
    x, y = P(x4[0], x4[1:]), P(y4[0], y4[1:])
    res = a0_apply(cfg_of(samples=100_000, strata=4, seed=23), ONE, x, y)
    val, err = frozen.A0_ORACLE[1]
    assert abs(res.value - val) <= 3.0 * math.hypot(res.stderr, err) + 1e-3 * abs(val)


def test_a1_matches_frozen_shell_oracle():
    x4, y4 = oracles.A1_POINTS[0]
    x, y = P(x4[0], x4[1:]), P(y4[0], y4[1:])
    res = a1_apply(cfg_of(m1=1.0, samples=40_000, strata=4, seed=29), ONE, x, y)
    val, err = frozen.A1_ORACLE[0]
    assert abs(res.value - val) <= 3.0 * math.hypot(res.stderr, err) + 1e-3 * abs(val)


def test_a12_matches_frozen_shell_oracle():
    x4, y4 = oracles.A12_POINT
    x, y = P(x4[0], x4[1:]), P(y4[0], y4[1:])
    res = a12_apply(cfg_of(m1=1.0, m2=1.0, samples=400_000, strata=2, seed=37), ONE, x, y)
    val, err = frozen.A12_ORACLE
    assert abs(res.value - val) <= 3.0 * math.hypot(res.stderr, err) + 2e-3 * abs(val)


def test_a1_pointwise_budget():
    """|A1 psi| stays below the mean-value-chain budget
    (lam m1^2/16 pi)(3 (x0+y0) g1(x0) g2(y0) + 2 g1(x0) g3(y0))."""
    fam = GaussPoly(1.0)
    cfg = cfg_of(lam=2.0, m1=1.0, samples=20_000)
    for x, y in ((X, Y), (P(0.7, (0.2, 0, -0.1)), P(1.0, (-0.3, 0.2, 0.4)))):
        res = a1_apply(cfg, ONE, x, y)
        budget = cfg.lam * cfg.m1**2 / (16 * math.pi) * (
            3.0 * (x.t + y.t) * g_eval(fam, 1, x.t) * g_eval(fam, 2, y.t)
            + 2.0 * g_eval(fam, 1, x.t) * g_eval(fam, 3, y.t)
        )
        assert abs(res.value) - 3.0 * res.stderr <= budget


def test_a12_pointwise_budget():
    fam = GaussPoly(1.0)
    cfg = cfg_of(lam=2.0, m1=1.0, m2=1.0, samples=50_000)
    x, y = P(1.2, (0.1, -0.2, 0.3)), P(1.0, (0.9, 0.2, -0.1))
    res = a12_apply(cfg, ONE, x, y)
    budget = cfg.lam * cfg.m1**2 * cfg.m2**2 / (96 * math.pi) * (
        x.t**2 * g_eval(fam, 2, x.t) * y.t * g_eval(fam, 1, y.t)
        + 0.5 * x.t**2 * g_eval(fam, 3, x.t) * g_eval(fam, 1, y.t)
    )
    assert abs(res.value) - 3.0 * res.stderr <= budget


def test_a0_pointwise_norm_bound_plane_wave():
    fam = GaussPoly(1.0)
    lam = 2.0
    psi = make_free(PlaneWaveProduct(((math.sqrt(1.25), 0.5, 0, 0), (1.0, 0, 0, 0)), (1.0, 1.0)))
    cfg = ModelConfig(lam, 0, 0, fam, QuadSpec(MonteCarlo(20_000, 2), seed=7))
    for x, y in ((X, Y), (P(1.4, (0.2, 0.5, 0)), P(0.6, (0, -0.4, 0.3)))):
        res = a0_apply(cfg, psi, x, y)
        bound = lam / (8 * math.pi) * g_eval(fam, 1, x.t) * g_eval(fam, 1, y.t)  # ||psi||_g = 1
        assert abs(res.value) - 3.0 * res.stderr <= bound


def _rotation(seed=3):
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    q, r = np.linalg.qr(gen.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def test_rotation_covariance_deterministic():
    rot = _rotation()
    k1 = np.array([math.sqrt(1.25), 0.5, 0.0, 0.0])
    k2 = np.array([math.sqrt(1.09), 0.0, 0.3, 0.0])
    psi = make_free(PlaneWaveProduct((tuple(k1), tuple(k2)), (1.0, 1.0)))
    k1r = (k1[0], *(rot @ k1[1:]))
    k2r = (k2[0], *(rot @ k2[1:]))
    psi_r = make_free(PlaneWaveProduct((k1r, k2r), (1.0, 1.0)))
    x, y = P(1.1, (0.2, -0.1, 0.4)), P(0.9, (0.6, 0.3, -0.2))
    xr = P(x.t, tuple(rot @ x.spatial()))
    yr = P(y.t, tuple(rot @ y.spatial()))
    # a0 samples in a frame built covariantly from x - y: the deterministic
    # grid rotates with the data and the values agree to roundoff-ish level
    cfg = ModelConfig(1.0, 1.0, 0.5, GaussPoly(1.0), QuadSpec(Deterministic(8), seed=1))
    v = a0_apply(cfg, psi, x, y).value
    vr = a0_apply(cfg, psi_r, xr, yr).value
    assert vr == pytest.approx(v, rel=1e-6, abs=1e-9)
    # a1/a12 sample angles in a fixed global frame; rotated runs are
    # independent estimates and agree within the statistical error
    cfg_mc = ModelConfig(1.0, 1.0, 0.5, GaussPoly(1.0), QuadSpec(MonteCarlo(60_000, 2), seed=1))
    for op in (a1_apply, a12_apply):
        a = op(cfg_mc, psi, x, y)
        b = op(cfg_mc, psi_r, xr, yr)
        assert abs(a.value - b.value) <= 4.0 * math.hypot(a.stderr, b.stderr)


def test_flrw_reduces_to_a0_bit_exact():
    cfg = cfg_of(samples=2048)
    ones = lambda t: np.ones_like(np.asarray(t, dtype=float))
    for x, y in ((X, Y), (P(0.5, (0.1, 0.2, 0.0)), P(1.3, (0.0, -0.3, 0.2)))):
        plain = a0_apply(cfg, ONE, x, y)
        tilde = a0_flrw_apply(cfg, ONE, x, y, scale_factor=ones)
        assert tilde.value == plain.value and tilde.stderr == plain.stderr


def test_flrw_zero_time_and_weight_requirement():
    cfg = cfg_of()
    lin = lambda t: np.asarray(t, dtype=float)
    assert a0_flrw_apply(cfg, ONE, P(0.0, (0, 0, 0)), Y, scale_factor=lin).value == 0.0
    with pytest.raises(ValueError):
        a0_flrw_apply(cfg, ONE, X, Y)  # GaussPoly weight, no explicit scale


def test_flrw_against_frozen_oracle_with_linear_scale():
    """the a(eta) = eta operator equals the shell oracle with the a*a factor;
    psi == 1 makes that the plain oracle with integrand a(x0-r) a(y0-rho)."""
    lin = lambda t: np.asarray(t, dtype=float)

    def scaled_psi(xs, ys):  # fold the scale factors into the oracle integrand
        return lin(xs[:, 0]) * lin(ys[:, 0]) * np.ones(xs.shape[0])

    x4, y4 = oracles.A0_POINTS[0]
    x, y = P(x4[0], x4[1:]), P(y4[0], y4[1:])
    val, err = oracles.richardson(oracles.shell_a0, x4=np.asarray(x4), y4=np.asarray(y4),
                                  psi_fn=scaled_psi, n_samples=6_000_000, seed=77)
    res = a0_flrw_apply(cfg_of(samples=100_000, strata=4, seed=31), ONE, x, y, scale_factor=lin)
    assert abs(res.value - val) <= 3.0 * math.hypot(res.stderr, err) + 2e-3 * abs(val)


def test_chi_transform_identity_and_roundtrip():
    ones = lambda t: np.ones_like(np.asarray(t, dtype=float))
    lin = lambda t: np.asarray(t, dtype=float)
    psi = make_free(PlaneWaveProduct(((1, 0, 0, 0), (1, 0, 0, 0)), (1, 1)))
    chi_id = chi_transform(ones, psi)
    assert chi_id.at(X, Y) == psi.at(X, Y)
    chi = chi_transform(lin, psi)
    back = chi_inverse(lin, chi)
    assert back.at(X, Y) == pytest.approx(psi.at(X, Y), rel=1e-15)
    assert chi_transform(lin, constant_wave(2, 1.0)).at(P(2, (0, 0, 0)), P(3, (0, 0, 0))) == 6.0
    with pytest.raises(ZeroDivisionError):
        chi_inverse(lin, chi).at(P(0.0, (0, 0, 0)), Y)


def _product3(masses=(1.0, 1.0, 1.0)):
    ks = ((math.sqrt(1.25), 0.5, 0, 0), (math.sqrt(1.04), 0, 0.2, 0), (1.0, 0, 0, 0))
    return make_free(PlaneWaveProduct(ks, masses))


def test_npart_pair_equals_two_particle():
    cfg = cfg_of(m1=1.0, m2=1.0, samples=256)
    psi2 = make_free(PlaneWaveProduct(((math.sqrt(1.25), 0.5, 0, 0), (math.sqrt(1.04), 0, 0.2, 0)), (1.0, 1.0)))
    direct = a_apply(cfg, psi2, X, Y)
    via_npart = npart_apply(cfg, psi2, (0, 1), [X, Y])
    assert via_npart.value == direct.value and via_npart.stderr == direct.stderr


def test_npart_slot_locality_exact():
    """third slot enters only through its factor: with h(x3) = 1 the pair
    application is bit-identical to the two-particle operator."""
    cfg = cfg_of(m1=1.0, m2=1.0, samples=256)
    psi3 = _product3()
    psi2 = make_free(PlaneWaveProduct(((math.sqrt(1.25), 0.5, 0, 0), (math.sqrt(1.04), 0, 0.2, 0)), (1.0, 1.0)))
    x3 = P(0.0, (0.0, 0.0, 0.0))  # phase 0: third factor is exactly 1
    res3 = npart_apply(cfg, psi3, (0, 1), [X, Y, x3])
    res2 = a_apply(cfg, psi2, X, Y)
    assert res3.value == res2.value
    # moving the spectator multiplies by its (unit) phase factor
    x3b = P(0.4, (0.1, 0.0, 0.2))
    res3b = npart_apply(cfg, psi3, (0, 1), [X, Y, x3b])
    phase = np.exp(-1j * 0.4)  # k3 = (1,0,0,0)
    assert res3b.value == pytest.approx(phase * res2.value, rel=1e-12)


def test_npart_permutation_symmetry_at_coincident_slots():
    # common seeds make all three pair applications sample identically; only
    # the factor-multiplication order differs (ulp-level)
    cfg = cfg_of(m1=1.0, m2=1.0, samples=256)
    psi3 = make_free(PlaneWaveProduct(((1.0, 0, 0, 0),) * 3, (1.0, 1.0, 1.0)))
    pts = [X, X, X]
    vals = [npart_apply(cfg, psi3, pair, pts).value for pair in ((0, 1), (0, 2), (1, 2))]
    assert vals[1] == pytest.approx(vals[0], rel=5e-15)
    assert vals[2] == pytest.approx(vals[0], rel=5e-15)


def test_npart_total_sums_pairs():
    cfg = cfg_of(samples=128)
    psi3 = make_free(PlaneWaveProduct(((1.0, 0, 0, 0),) * 3, (1.0, 1.0, 1.0)))
    pts = [X, Y, P(0.5, (0.2, 0.1, 0.0))]
    masses = [1.0, 1.0, 1.0]
    total = npart_apply_total(cfg, masses, psi3, pts)
    by_hand = 0.0 + 0.0j
    for i, j in ((0, 1), (0, 2), (1, 2)):
        by_hand = by_hand + npart_apply(replace(cfg, m1=masses[i], m2=masses[j]), psi3, (i, j), pts).value
    assert total.value == by_hand


def test_npart_validates_pair():
    cfg = cfg_of()
    with pytest.raises(ValueError):
        npart_apply(cfg, _product3(), (1, 1), [X, Y, X])
    with pytest.raises(ValueError):
        npart_apply(cfg, _product3(), (0, 1), [X, Y])


def test_psi_failure_propagates_with_coordinates():
    def bad(xs, ys):
        raise RuntimeError("boom")

    with pytest.raises(WaveFunctionError):
        a0_apply(cfg_of(samples=64), WaveFunction(2, bad), X, Y)

    def nan_psi(xs, ys):
        out = np.ones(xs.shape[0], dtype=complex)
        out[0] = np.nan
        return out

    with pytest.raises(IntegrandError) as err:
        a0_apply(cfg_of(samples=64), WaveFunction(2, nan_psi), X, Y)
    assert err.value.coords is not None


def test_weighted_norm_bound_statistical():
    """max over a cloud of |A psi|/(g g) <= ledger total + 4 max stderr/(g g)."""
    from lightcone.weights import closed_form_bounds

    fam = GaussPoly(1.0)
    cfg = ModelConfig(1.0, 1.0, 0.5, fam, QuadSpec(MonteCarlo(8192, 2), seed=13))
    psi = make_free(PlaneWaveProduct(((1.0, 0, 0, 0), (math.sqrt(0.5), 0, 0, 0.5)), (1.0, 0.5)))
    total = closed_form_bounds(cfg.lam, cfg.m1, cfg.m2, 1.0).total  # ||psi||_g = 1
    worst = -np.inf
    max_err = 0.0
    from .conftest import random_pairs

    for x, y in random_pairs(6, horizon=1.5, radius=0.8, seed=5):
        res = a_apply(cfg, psi, x, y)
        gg = float(fam.weight(x.t)) * float(fam.weight(y.t))
        worst = max(worst, abs(res.value) / gg)
        max_err = max(max_err, res.stderr / gg)
    assert worst <= total + 4.0 * max_err


def test_det_and_mc_agree():
    cfg_mc = cfg_of(samples=100_000, strata=4, seed=3)
    cfg_det = ModelConfig(1.0, 0.0, 0.0, GaussPoly(1.0), QuadSpec(Deterministic(16), seed=3))
    x, y = P(1.2, (0.1, -0.2, 0.3)), P(1.0, (0.9, 0.2, -0.1))
    mc = a0_apply(cfg_mc, ONE, x, y)
    det = a0_apply(cfg_det, ONE, x, y)
    assert det.value == pytest.approx(mc.value, rel=5e-3)
    assert det.stderr == 0.0
