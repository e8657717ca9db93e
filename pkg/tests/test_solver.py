import math
from dataclasses import replace

import numpy as np
import pytest

from lightcone.fields import PlaneWaveProduct, compact_support_free, make_free
from lightcone.geometry import SpacetimePoint
from lightcone.operators import ModelConfig, a0_apply, a0_flrw_apply
from lightcone.quadrature import MonteCarlo, QuadSpec
from lightcone.solver import (
    SolveSpec,
    apply_to_stages,
    flrw_solve,
    initial_coincidence_test,
    ledger_norm_bound,
    make_stages,
    neumann_evaluate,
    propagation_test,
    residual_check,
    tail_bound,
)
from lightcone.weights import Exponential, Flrw, GaussPoly

P = SpacetimePoint


def plane_wave(masses=(0.0, 0.0)):
    ks = tuple((math.sqrt(k[1] ** 2 + k[2] ** 2 + k[3] ** 2 + m * m), k[1], k[2], k[3])
               for k, m in zip(((0, 0.4, 0, 0), (0, 0, 0.3, 0)), masses))
    return make_free(PlaneWaveProduct(ks, masses))


def small_cloud(n=4, seed=2):
    from .conftest import random_pairs

    return tuple(random_pairs(n, horizon=1.2, radius=0.7, seed=seed))


def massless_spec(K=1, n=4, lam=0.5, samples=(64, 16), seed=5):
    cfg = ModelConfig(lam, 0.0, 0.0, GaussPoly(1.0), QuadSpec(MonteCarlo(samples[0], 1), seed=seed))
    sched = tuple(QuadSpec(MonteCarlo(s, 1), seed=seed) for s in samples)
    return SolveSpec(truncation=K, schedule=sched, cloud=small_cloud(n), cfg=cfg)


def test_k0_echoes_free_solution():
    spec = massless_spec(K=0)
    psi = plane_wave()
    rep = neumann_evaluate(spec, psi)
    for i, (x, y) in enumerate(spec.cloud):
        assert rep.partial_sum()[i] == psi.at(x, y)


def test_k1_matches_direct_operator_application():
    spec = massless_spec(K=1)
    psi = plane_wave()
    rep = neumann_evaluate(spec, psi)
    for i, (x, y) in enumerate(spec.cloud):
        direct = a0_apply(replace(spec.cfg, quad=spec.schedule[0]), psi, x, y)
        assert rep.stage_values[i, 0] == direct.value
        assert rep.partial_sum()[i] == psi.at(x, y) + direct.value


def test_lambda_linearity_of_first_correction():
    psi = plane_wave()
    spec1 = massless_spec(K=1, lam=0.25)
    spec4 = massless_spec(K=1, lam=1.0)
    rep1 = neumann_evaluate(spec1, psi)
    rep4 = neumann_evaluate(spec4, psi)
    assert np.array_equal(4.0 * rep1.stage_values[:, 0], rep4.stage_values[:, 0])


def test_lambda_to_zero_limit():
    psi = plane_wave()
    lam = 1e-9
    rep = neumann_evaluate(massless_spec(K=1, lam=lam), psi)
    gap = np.max(np.abs(rep.partial_sum() - rep.free_values))
    assert gap <= lam * 1e3  # linear-in-lambda with an O(1) constant


@pytest.mark.parametrize("masses,K", [((0.0, 0.0), 2), ((0.6, 0.4), 1)])
def test_telescoping_bit_exact(masses, K):
    """S_K - psi_free - A S_(K-1) = 0 under common seeds, component-wise and
    for identically ordered folds."""
    psi = plane_wave(masses)
    cfg = ModelConfig(0.8, masses[0], masses[1], GaussPoly(1.0), QuadSpec(MonteCarlo(48, 1), seed=9))
    sched = tuple(QuadSpec(MonteCarlo(s, 1), seed=9) for s in (48, 12, 8)[: max(K, 1)])
    spec = SolveSpec(truncation=K, schedule=sched, cloud=small_cloud(3), cfg=cfg)
    rep = neumann_evaluate(spec, psi)
    stages = make_stages(cfg, psi, K - 1, sched)
    for i, (x, y) in enumerate(spec.cloud):
        applied = apply_to_stages(cfg, stages, x, y, sched)
        # component-wise: A on stage k reproduces stage k+1
        for k in range(K):
            assert applied[k].value == rep.stage_values[i, k]
        lhs = 0.0 + 0.0j
        rhs = 0.0 + 0.0j
        for k in range(K):
            lhs = lhs + rep.stage_values[i, k]
            rhs = rhs + applied[k].value
        assert lhs - rhs == 0.0


def test_tail_bound_arithmetic():
    assert tail_bound(0.5, 3, 1.0) == pytest.approx(0.125, rel=1e-15)
    assert tail_bound(0.5, 4, 1.0) == pytest.approx(0.0625, rel=1e-15)
    assert tail_bound(0.0, 2, 5.0) == 0.0
    assert tail_bound(1.0, 2, 1.0) is None
    assert tail_bound(0.5, 3, 1.0, weight_product=2.0) == pytest.approx(0.25, rel=1e-15)
    with pytest.raises(ValueError):
        tail_bound(-0.1, 1, 1.0)


def test_residual_equals_next_correction_at_k0():
    psi = plane_wave()
    spec = massless_spec(K=0, samples=(64,))
    rep = neumann_evaluate(spec, psi)
    res = residual_check(spec, psi, report=rep)
    for i, (x, y) in enumerate(spec.cloud):
        direct = a0_apply(replace(spec.cfg, quad=spec.schedule[0]), psi, x, y)
        assert res.residual[i] == -direct.value


def test_residual_decays_with_truncation():
    psi = plane_wave()
    meds = []
    for K in (0, 1):
        spec = massless_spec(K=K, lam=0.4, samples=(96, 24, 8))
        rep = neumann_evaluate(spec, psi)
        res = residual_check(spec, psi, report=rep)
        meds.append(np.median(np.abs(res.residual)))
    assert meds[1] < meds[0]


def test_zero_time_rows_exact():
    psi = plane_wave((0.5, 0.5))
    cfg = ModelConfig(2.0, 0.5, 0.5, GaussPoly(1.0), QuadSpec(MonteCarlo(32, 1), seed=4))
    sched = (QuadSpec(MonteCarlo(32, 1), seed=4), QuadSpec(MonteCarlo(8, 1), seed=4))
    pairs = [((0.3 * i, 0.1, 0.0), (0.0, -0.2 * i, 0.1)) for i in range(8)]
    checked = initial_coincidence_test(cfg, psi, pairs, 2, sched)
    assert checked == 8


def test_certificate_consistency_empirical():
    """stage magnitudes contract at the ledger rate (plus noise allowance)."""
    psi = plane_wave()
    spec = massless_spec(K=2, lam=0.8, samples=(128, 48, 16), n=5)
    rep = neumann_evaluate(spec, psi)
    fam = spec.cfg.weight
    gg = np.array([float(fam.weight(x.t)) * float(fam.weight(y.t)) for x, y in spec.cloud])
    t1 = np.abs(rep.stage_values[:, 0]) / gg
    t2 = np.abs(rep.stage_values[:, 1]) / gg
    err = 4.0 * np.max((rep.stage_stderr[:, 0] + rep.stage_stderr[:, 1]) / gg)
    assert np.max(t2) <= rep.norm_a * np.max(t1) + err


def test_workers_do_not_change_results():
    psi = plane_wave()
    spec = massless_spec(K=1, n=6)
    a = neumann_evaluate(spec, psi, workers=1)
    b = neumann_evaluate(spec, psi, workers=3)
    assert np.array_equal(a.stage_values, b.stage_values)
    assert np.array_equal(a.free_values, b.free_values)


def test_uncertified_when_contraction_fails():
    psi = plane_wave()
    spec = massless_spec(K=1, lam=200.0)
    rep = neumann_evaluate(spec, psi, norm_free=1.0)
    assert rep.norm_a >= 1.0
    assert rep.tail is None and not rep.certified
    assert any("uncertified" in n for n in rep.notes)


def test_certified_tail_values():
    psi = plane_wave()
    spec = massless_spec(K=1, lam=0.5)
    rep = neumann_evaluate(spec, psi, norm_free=1.0)
    assert rep.certified
    fam = spec.cfg.weight
    for i, (x, y) in enumerate(spec.cloud):
        expected = tail_bound(rep.norm_a, 1, 1.0, float(fam.weight(x.t)) * float(fam.weight(y.t)))
        assert rep.tail[i] == pytest.approx(expected, rel=1e-15)


def test_propagation_exterior_zeros():
    radius = 0.5
    psi = compact_support_free(radius)
    cfg = ModelConfig(1.0, 0.0, 0.0, GaussPoly(1.0), QuadSpec(MonteCarlo(64, 1), seed=6))
    sched = (QuadSpec(MonteCarlo(64, 1), seed=6), QuadSpec(MonteCarlo(16, 1), seed=6))
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(8)))
    pairs = []
    for _ in range(12):
        t1, t2 = gen.random(2) * 1.5
        u = gen.normal(size=3)
        u /= np.linalg.norm(u)
        p = (radius + t1 + 0.05 + gen.random()) * u
        q = gen.normal(size=3) * 0.2
        pairs.append((P(t1, tuple(p)), P(t2, tuple(q))))
    rep = propagation_test(cfg, psi, pairs, 2, sched)
    assert rep.passed
    assert np.max(np.abs(rep.values)) == 0.0
    # sanity: an interior pair is generically nonzero
    interior = (P(0.4, (0.1, 0.0, 0.0)), P(0.3, (0.0, 0.1, 0.0)))
    spec = SolveSpec(truncation=1, schedule=sched, cloud=(interior,), cfg=cfg)
    rep_in = neumann_evaluate(spec, psi)
    assert abs(rep_in.partial_sum()[0]) > 0.0


def test_propagation_requires_compact_massless():
    cfg = ModelConfig(1.0, 0.0, 0.0, GaussPoly(1.0), QuadSpec(MonteCarlo(16, 1), seed=1))
    with pytest.raises(ValueError):
        propagation_test(cfg, plane_wave(), [], 1, (cfg.quad,))
    bad_cfg = replace(cfg, m1=1.0)
    with pytest.raises(ValueError):
        propagation_test(bad_cfg, compact_support_free(0.5), [], 1, (cfg.quad,))


def _linear_flrw(gamma=1.0):
    return Flrw(gamma, lambda e: np.asarray(e, dtype=float), lambda e: 0.5 * np.asarray(e, dtype=float) ** 2)


def test_flrw_unit_scale_equals_minkowski():
    psi = plane_wave()
    cfg = ModelConfig(0.7, 0.0, 0.0, GaussPoly(1.0), QuadSpec(MonteCarlo(48, 1), seed=12))
    sched = (QuadSpec(MonteCarlo(48, 1), seed=12),)
    spec = SolveSpec(truncation=1, schedule=sched, cloud=small_cloud(3, seed=9), cfg=cfg)
    ones = lambda t: np.ones_like(np.asarray(t, dtype=float))
    rep_mink = neumann_evaluate(spec, psi, apply_fn=a0_apply)
    rep_unit = neumann_evaluate(spec, psi,
                                apply_fn=lambda c, w, x, y: a0_flrw_apply(c, w, x, y, scale_factor=ones))
    assert np.array_equal(rep_mink.stage_values, rep_unit.stage_values)


def test_flrw_solve_report():
    chi_free = plane_wave()
    cfg = ModelConfig(0.7, 0.0, 0.0, _linear_flrw(1.0), QuadSpec(MonteCarlo(48, 1), seed=3))
    sched = (QuadSpec(MonteCarlo(48, 1), seed=3),)
    cloud = small_cloud(3, seed=14)
    spec = SolveSpec(truncation=1, schedule=sched, cloud=cloud, cfg=cfg)
    rep = flrw_solve(spec, chi_free, norm_free=1.0)
    for i, (x, y) in enumerate(cloud):
        expected = rep.chi_values[i] / (x.t * y.t)
        assert rep.psi_values[i] == pytest.approx(expected, rel=1e-15)
    # K = 0 echoes chi_free
    spec0 = SolveSpec(truncation=0, schedule=sched, cloud=cloud, cfg=cfg)
    rep0 = flrw_solve(spec0, chi_free)
    for i, (x, y) in enumerate(cloud):
        assert rep0.chi_values[i] == chi_free.at(x, y)


def test_flrw_solve_validates():
    cfg = ModelConfig(1.0, 0.0, 0.0, GaussPoly(1.0), QuadSpec(MonteCarlo(16, 1), seed=1))
    spec = SolveSpec(truncation=0, schedule=(cfg.quad,), cloud=small_cloud(1), cfg=cfg)
    with pytest.raises(ValueError):
        flrw_solve(spec, plane_wave())


def test_ledger_norm_bound_families():
    quad = QuadSpec(MonteCarlo(16, 1), seed=0)
    g, _, _ = ledger_norm_bound(ModelConfig(8 * math.pi, 0, 0, GaussPoly(1.0), quad))
    assert g == pytest.approx(0.25, rel=1e-15)
    e, _, _ = ledger_norm_bound(ModelConfig(1.0, 0, 0, Exponential(2.0), quad))
    assert e == pytest.approx(1.0 / (32 * math.pi), rel=1e-12)
    f, _, _ = ledger_norm_bound(ModelConfig(8 * math.pi, 0, 0, _linear_flrw(2.0), quad))
    assert f == 0.25
    none_f, _, _ = ledger_norm_bound(ModelConfig(1.0, 1.0, 0.0, _linear_flrw(1.0), quad))
    assert none_f is None


def test_solve_spec_validation():
    cfg = ModelConfig(1.0, 0.0, 0.0, GaussPoly(1.0), QuadSpec(MonteCarlo(16, 1), seed=0))
    with pytest.raises(ValueError):
        SolveSpec(truncation=2, schedule=(cfg.quad,), cloud=small_cloud(1), cfg=cfg)
    with pytest.raises(ValueError):
        SolveSpec(truncation=-1, schedule=(cfg.quad,), cloud=small_cloud(1), cfg=cfg)
