"""Truncated Neumann-series evaluation of psi = psi_free + A psi.

Stage k holds the fresh quadrature estimate of A^k psi_free; the partial sum
S_K is the series truncation.  Each stage's samples are seeded by (seed,
operator, stage, point), so a stage value at a point is a pure function:
applying A to a sum of stages level-by-level reproduces the next stages
bit-exactly, which is what the telescoping checks exercise.

Tail certificates use the bound ledger: when the operator norm bound q < 1,
the remainder obeys ||psi - S_K||_g <= q^(K+1)/(1-q) ||psi_free||_g,
converted pointwise by the weight product g(x0) g(y0).
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .geometry import SpacetimePoint
from .operators import ModelConfig, WaveFunction, a_apply, a0_flrw_apply
from .quadrature import EvalResult, QuadSpec, point_key
from .weights import (
    BoundReport,
    BoundsUnavailableError,
    Exponential,
    Flrw,
    GaussPoly,
    supremum_bounds,
    closed_form_bounds,
    flrw_bound,
)

__all__ = [
    "SolveSpec",
    "SolveReport",
    "StageCache",
    "make_stages",
    "apply_to_stages",
    "neumann_evaluate",
    "tail_bound",
    "residual_check",
    "initial_coincidence_test",
    "propagation_test",
    "flrw_solve",
    "ledger_norm_bound",
]

PointPair = tuple[SpacetimePoint, SpacetimePoint]


@dataclass(frozen=True)
class SolveSpec:
    """Truncation order, per-level quadrature budgets, cloud and model."""

    truncation: int
    schedule: tuple[QuadSpec, ...]
    cloud: tuple[PointPair, ...]
    cfg: ModelConfig
    use_cache: bool = True

    def __post_init__(self):
        if self.truncation < 0:
            raise ValueError("SolveSpec: truncation must be >= 0")
        if len(self.schedule) < self.truncation:
            raise ValueError("SolveSpec: schedule must cover every level (length >= K)")

    def level_quad(self, operand_level: int) -> QuadSpec:
        """Budget used when applying A to a stage of the given level."""
        idx = min(operand_level, len(self.schedule) - 1)
        return self.schedule[idx]


class StageCache:
    """Memo for (stage level, point) values: single writer per key,
    first-write-wins (evaluation is pure, so late writers agree)."""

    def __init__(self):
        self._data: dict = {}
        self._lock = threading.Lock()

    def get_or_compute(self, key, compute: Callable[[], complex]) -> complex:
        with self._lock:
            if key in self._data:
                return self._data[key]
        value = compute()
        with self._lock:
            return self._data.setdefault(key, value)


def _stage_wavefunction(cfg: ModelConfig, prev: WaveFunction, level: int, quad: QuadSpec,
                        apply_fn: Callable, cache: StageCache | None) -> WaveFunction:
    level_cfg = replace(cfg, quad=quad)

    def fn(xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        out = np.empty(xs.shape[0], dtype=complex)
        for i in range(xs.shape[0]):
            xi = SpacetimePoint(max(xs[i, 0], 0.0), tuple(xs[i, 1:]))
            yi = SpacetimePoint(max(ys[i, 0], 0.0), tuple(ys[i, 1:]))
            if cache is not None:
                k = (level, point_key(xi.four(), yi.four()))
                out[i] = cache.get_or_compute(k, lambda: apply_fn(level_cfg, prev, xi, yi).value)
            else:
                out[i] = apply_fn(level_cfg, prev, xi, yi).value
        return out

    return WaveFunction(2, fn, descriptor=f"neumann-stage-{level}", level=level)


def make_stages(cfg: ModelConfig, psi_free: WaveFunction, K: int, schedule: Sequence[QuadSpec],
                apply_fn: Callable = a_apply, cache: StageCache | None = None) -> list[WaveFunction]:
    """Stage evaluators [psi_free, A psi_free, ..., A^K psi_free]."""
    stages = [psi_free]
    for k in range(1, K + 1):
        quad = schedule[min(k - 1, len(schedule) - 1)]
        stages.append(_stage_wavefunction(cfg, stages[k - 1], k, quad, apply_fn, cache))
    return stages


def apply_to_stages(cfg: ModelConfig, stages: Sequence[WaveFunction], x: SpacetimePoint, y: SpacetimePoint,
                    schedule: Sequence[QuadSpec], apply_fn: Callable = a_apply) -> list[EvalResult]:
    """A applied level-wise to each stage (exact linearity, shared streams).

    Applying A to stage k reuses the budget and seed stream that produced
    stage k+1, so the results reproduce the next stages bit-exactly.
    """
    out = []
    for k, stage in enumerate(stages):
        quad = schedule[min(k, len(schedule) - 1)]
        out.append(apply_fn(replace(cfg, quad=quad), stage, x, y))
    return out


def ledger_norm_bound(cfg: ModelConfig) -> tuple[float | None, BoundReport | None, str]:
    """Operator-norm bound from the analytic ledger for cfg's weight family."""
    w = cfg.weight
    if isinstance(w, GaussPoly):
        rep = closed_form_bounds(cfg.lam, cfg.m1, cfg.m2, w.alpha)
        return rep.total, rep, "closed-form massive-case bounds"
    if isinstance(w, Flrw):
        if cfg.m1 != 0.0 or cfg.m2 != 0.0:
            return None, None, "FLRW bound covers the massless operator only"
        return flrw_bound(cfg.lam, w.gamma), None, "FLRW conformal bound"
    if isinstance(w, Exponential):
        if cfg.m1 == 0.0 and cfg.m2 == 0.0:
            return cfg.lam / (8.0 * np.pi * w.gamma**2), None, "exponential-weight massless bound"
        try:
            rep = supremum_bounds(cfg.lam, cfg.m1, cfg.m2, w)
            return rep.total, rep, "supremum-based bounds"
        except BoundsUnavailableError:
            return None, None, "massive bounds unavailable for the exponential weight"
    return None, None, "no ledger bound for this family"


def tail_bound(norm_a: float, K: int, norm_free: float, weight_product: float = 1.0) -> float | None:
    """Geometric-series remainder q^(K+1)/(1-q) * ||psi_free||_g, g-weighted.

    Returns None (no certificate) when norm_a >= 1.
    """
    if norm_a < 0.0 or norm_free < 0.0 or weight_product < 0.0:
        raise ValueError("tail_bound: arguments must be >= 0")
    if norm_a >= 1.0:
        return None
    return norm_a ** (K + 1) / (1.0 - norm_a) * norm_free * weight_product


@dataclass
class SolveReport:
    """Per-point Neumann stages, partial sums, and tail certificates."""

    points: tuple[PointPair, ...]
    free_values: np.ndarray          # (n,)
    stage_values: np.ndarray         # (n, K) corrections T_1..T_K
    stage_stderr: np.ndarray         # (n, K)
    norm_a: float | None
    bound_report: BoundReport | None
    norm_free: float | None
    truncation: int
    notes: list[str] = field(default_factory=list)
    tail: np.ndarray | None = None   # (n,) g-weighted tail bounds, None if uncertified

    @property
    def certified(self) -> bool:
        return self.tail is not None

    def correction_sum(self, upto: int | None = None) -> np.ndarray:
        """Left-fold sum T_1 + ... + T_upto (the same fold order everywhere)."""
        k = self.truncation if upto is None else upto
        out = np.zeros_like(self.free_values)
        for j in range(k):
            out = out + self.stage_values[:, j]
        return out

    def partial_sum(self, k: int | None = None) -> np.ndarray:
        k = self.truncation if k is None else k
        return self.free_values + self.correction_sum(k)

    def stderr_total(self) -> np.ndarray:
        return np.sqrt(np.sum(self.stage_stderr**2, axis=1))


def neumann_evaluate(spec: SolveSpec, psi_free: WaveFunction, *, norm_free: float | None = None,
                     apply_fn: Callable = a_apply, workers: int = 1) -> SolveReport:
    """Partial sums S_K = sum_k A^k psi_free on the cloud, with certificates.

    Cloud points are independent; `workers` threads evaluate them in
    parallel and results are merged by point index, so the output does not
    depend on the worker count.
    """
    K = spec.truncation
    notes: list[str] = []
    norm_a, bound_rep, how = ledger_norm_bound(spec.cfg)
    notes.append(f"norm bound: {how}")
    if norm_a is None:
        notes.append("no operator-norm bound available; tail uncertified")
    elif norm_a >= 1.0:
        notes.append(f"contraction fails (bound {norm_a:.6g} >= 1); tail uncertified")

    cache = StageCache() if spec.use_cache else None
    stages = make_stages(spec.cfg, psi_free, K, spec.schedule, apply_fn, cache)

    n = len(spec.cloud)
    free_values = np.empty(n, dtype=complex)
    stage_values = np.zeros((n, K), dtype=complex)
    stage_stderr = np.zeros((n, K), dtype=float)

    def eval_point(i: int):
        x, y = spec.cloud[i]
        free_values[i] = psi_free.at(x, y)
        for k in range(1, K + 1):
            quad = spec.level_quad(k - 1)
            res = apply_fn(replace(spec.cfg, quad=quad), stages[k - 1], x, y)
            stage_values[i, k - 1] = res.value
            stage_stderr[i, k - 1] = res.stderr
            if cache is not None:
                key = (k, point_key(x.four(), y.four()))
                cache.get_or_compute(key, lambda v=res.value: v)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(eval_point, range(n)))
    else:
        for i in range(n):
            eval_point(i)

    tail = None
    if norm_a is not None and norm_a < 1.0 and norm_free is not None:
        weight = spec.cfg.weight
        tail = np.array(
            [tail_bound(norm_a, K, norm_free, float(weight.weight(x.t)) * float(weight.weight(y.t)))
             for x, y in spec.cloud]
        )
    return SolveReport(
        points=tuple(spec.cloud),
        free_values=free_values,
        stage_values=stage_values,
        stage_stderr=stage_stderr,
        norm_a=norm_a,
        bound_report=bound_rep,
        norm_free=norm_free,
        truncation=K,
        notes=notes,
        tail=tail,
    )


@dataclass
class ResidualReport:
    points: tuple[PointPair, ...]
    residual: np.ndarray
    stderr: np.ndarray


def residual_check(spec: SolveSpec, psi_free: WaveFunction, *, apply_fn: Callable = a_apply,
                   report: SolveReport | None = None) -> ResidualReport:
    """R = S_K - psi_free - A S_K, evaluated level-wise.

    By telescoping R = -(A^(K+1) psi_free); its size tracks the tail.
    """
    if report is None:
        report = neumann_evaluate(spec, psi_free, apply_fn=apply_fn)
    K = spec.truncation
    cache = StageCache() if spec.use_cache else None
    stages = make_stages(spec.cfg, psi_free, K, spec.schedule, apply_fn, cache)
    n = len(spec.cloud)
    residual = np.empty(n, dtype=complex)
    stderr = np.empty(n, dtype=float)
    for i, (x, y) in enumerate(spec.cloud):
        applied = apply_to_stages(spec.cfg, stages, x, y, spec.schedule, apply_fn)
        a_sum = 0.0 + 0.0j
        for res in applied:
            a_sum = a_sum + res.value
        residual[i] = report.correction_sum()[i] - a_sum
        stderr[i] = float(np.sqrt(sum(r.stderr**2 for r in applied)))
    return ResidualReport(points=tuple(spec.cloud), residual=residual, stderr=stderr)


def initial_coincidence_test(cfg: ModelConfig, psi_free: WaveFunction, spatial_pairs, K: int,
                             schedule: Sequence[QuadSpec], *, apply_fn: Callable = a_apply) -> int:
    """S_K(0, x, 0, y) must equal psi_free exactly (empty integration domains).

    Returns the number of pairs checked; any deviation raises RuntimeError.
    """
    cloud = tuple(
        (SpacetimePoint(0.0, tuple(p)), SpacetimePoint(0.0, tuple(q))) for p, q in spatial_pairs
    )
    spec = SolveSpec(truncation=K, schedule=tuple(schedule), cloud=cloud, cfg=cfg)
    report = neumann_evaluate(spec, psi_free, apply_fn=apply_fn)
    bad = []
    for i, (x, y) in enumerate(cloud):
        if np.any(report.stage_values[i] != 0.0) or report.partial_sum()[i] != report.free_values[i]:
            bad.append((x, y))
    if bad:
        raise RuntimeError(f"initial-coincidence violated at {len(bad)} pairs, first: {bad[0]}")
    return len(cloud)


@dataclass
class PropagationReport:
    points: tuple[PointPair, ...]
    values: np.ndarray
    stderr: np.ndarray
    violations: list[int]

    @property
    def passed(self) -> bool:
        return not self.violations


def propagation_test(cfg: ModelConfig, psi_free: WaveFunction, exterior_pairs: Sequence[PointPair],
                     K: int, schedule: Sequence[QuadSpec]) -> PropagationReport:
    """Evaluate S_K at pairs outside the causally grown support.

    Requires a compact-support massless input; |S_K| <= 4 stderr must hold
    at every exterior pair (exactly zero in practice: every operator sample
    lands outside the support as well).
    """
    if cfg.m1 != 0.0 or cfg.m2 != 0.0:
        raise ValueError("propagation_test: massless configuration required")
    if psi_free.support_radius is None:
        raise ValueError("propagation_test: compact-support input required")
    spec = SolveSpec(truncation=K, schedule=tuple(schedule), cloud=tuple(exterior_pairs), cfg=cfg)
    report = neumann_evaluate(spec, psi_free)
    values = report.partial_sum()
    stderr = report.stderr_total()
    violations = [i for i in range(len(values)) if abs(values[i]) > 4.0 * stderr[i]]
    return PropagationReport(points=tuple(exterior_pairs), values=values, stderr=stderr, violations=violations)


@dataclass
class FlrwReport:
    base: SolveReport
    psi_values: np.ndarray  # chi / (a a), NaN where a conformal time is 0

    @property
    def chi_values(self) -> np.ndarray:
        return self.base.partial_sum()


def flrw_solve(spec: SolveSpec, chi_free: WaveFunction, *, norm_free: float | None = None) -> FlrwReport:
    """Neumann evaluation of chi = chi_free + A0~ chi on an FLRW background.

    The report carries the conformal-frame values and the physical-frame
    values chi / (a(eta1) a(eta2)) wherever both conformal times are > 0
    (the inverse transform diverges like 1/(a a) toward the Big Bang).
    """
    if not isinstance(spec.cfg.weight, Flrw):
        raise ValueError("flrw_solve: Flrw weight family required")
    if spec.cfg.m1 != 0.0 or spec.cfg.m2 != 0.0:
        raise ValueError("flrw_solve: massless (conformal) case only")
    base = neumann_evaluate(spec, chi_free, norm_free=norm_free, apply_fn=a0_flrw_apply)
    a = spec.cfg.weight.scale_factor
    chi_vals = base.partial_sum()
    psi_vals = np.full_like(chi_vals, np.nan)
    for i, (x, y) in enumerate(spec.cloud):
        a1, a2 = float(a(x.t)), float(a(y.t))
        if a1 != 0.0 and a2 != 0.0:
            psi_vals[i] = chi_vals[i] / (a1 * a2)
        else:
            base.notes.append(f"psi-frame value undefined at eta=0 point index {i}")
    return FlrwReport(base=base, psi_values=psi_vals)
