"""Batch front-end: config parsing, subcommands, report serialization.

Subcommands: bounds | evaluate | verify | propagation | flrw.
Config is a TOML file with [model], [quadrature], [solve], [io] tables (plus
optional [bounds], [propagation]); all quantities in natural units.
Exit codes: 0 ok, 1 verification/propagation failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import fields, solver, weights
from .geometry import SpacetimePoint
from .operators import ModelConfig, a0_apply, a0_flrw_apply
from .quadrature import Deterministic, MonteCarlo, QuadSpec, rng_stream
from .specfun import bessel_j1_ratio, dawson

CSV_FMT = "{:.17g}"


class ConfigError(ValueError):
    pass


def _fmt(v: float) -> str:
    return CSV_FMT.format(float(v))


# ---------------------------------------------------------------------------
# config parsing


@dataclass
class RunConfig:
    cfg: ModelConfig
    free_spec: object
    truncation: int
    budget_decay: int
    horizon: float
    cloud_spec: dict
    formats: tuple[str, ...]
    raw: dict


def _weight_from_table(tab: dict):
    family = tab.get("family")
    if family == "exponential":
        return weights.Exponential(float(tab["gamma"]))
    if family == "gauss_poly":
        return weights.GaussPoly(float(tab["alpha"]))
    if family == "flrw":
        return weights.Flrw(float(tab["gamma"]), *(_named_scale(tab.get("scale_factor", "linear"))))
    raise ConfigError(f"unknown weight family {family!r}")


def _named_scale(name: str):
    """Named scale factors a(eta) with their exact integrals."""
    if name == "linear":
        return (lambda e: np.asarray(e, dtype=float), lambda e: 0.5 * np.asarray(e, dtype=float) ** 2)
    if name == "sqrt":
        return (lambda e: np.sqrt(np.asarray(e, dtype=float)), lambda e: (2.0 / 3.0) * np.asarray(e, dtype=float) ** 1.5)
    if name == "quadratic":
        return (lambda e: np.asarray(e, dtype=float) ** 2, lambda e: np.asarray(e, dtype=float) ** 3 / 3.0)
    raise ConfigError(f"unknown scale factor {name!r} (use linear | sqrt | quadratic)")


def _quad_from_table(tab: dict, seed_override=None) -> QuadSpec:
    mode_name = tab.get("mode", "mc")
    if mode_name in ("mc", "monte_carlo"):
        mode = MonteCarlo(int(tab.get("samples", 4096)), int(tab.get("strata_per_axis", 2)))
    elif mode_name == "deterministic":
        mode = Deterministic(int(tab.get("points_per_axis", 6)))
    else:
        raise ConfigError(f"unknown quadrature mode {mode_name!r}")
    seed = int(tab.get("seed", 0)) if seed_override is None else int(seed_override)
    return QuadSpec(mode, seed=seed, target_rel_error=float(tab.get("target_rel_error", 1e-2)))


def _free_from_table(tab: dict, masses):
    kind = tab.get("type", "plane_wave")
    if kind == "plane_wave":
        momenta = tab.get("momenta")
        if momenta is None:
            momenta = [[m, 0.0, 0.0, 0.0] for m in masses]
        return fields.PlaneWaveProduct(tuple(tuple(k) for k in momenta), tuple(masses))
    if kind == "packet":
        if any(m != 0.0 for m in masses):
            raise ConfigError("packet free solutions require massless particles")
        return float(tab.get("radius", 0.5))  # marker: compact packet of this radius
    if kind == "superposition":
        amps = tab["amplitudes"]
        momenta_sets = tab["momenta_sets"]
        terms = tuple(
            (complex(a[0], a[1] if len(a) > 1 else 0.0), fields.PlaneWaveProduct(tuple(tuple(k) for k in ks), tuple(masses)))
            for a, ks in zip(amps, momenta_sets)
        )
        return fields.PacketSuperposition(terms)
    raise ConfigError(f"unknown free-solution type {kind!r}")


def load_config(path: str, seed_override=None) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    try:
        model = raw["model"]
        masses = [float(m) for m in model.get("masses", [0.0, 0.0])]
        if len(masses) < 2:
            raise ConfigError("model.masses needs at least two entries")
        weight = _weight_from_table(model["weight"])
        quad = _quad_from_table(raw.get("quadrature", {}), seed_override)
        cfg = ModelConfig(float(model["coupling"]), masses[0], masses[1], weight, quad)
        free_spec = _free_from_table(model.get("free", {}), masses)
        sol = raw.get("solve", {})
        io_tab = raw.get("io", {})
        return RunConfig(
            cfg=cfg,
            free_spec=free_spec,
            truncation=int(sol.get("truncation", 1)),
            budget_decay=int(sol.get("budget_decay", 8)),
            horizon=float(sol.get("horizon", 2.0)),
            cloud_spec=sol.get("cloud", {"type": "random", "count": 4, "radius": 1.0, "seed": 1}),
            formats=tuple(io_tab.get("formats", ("csv", "json"))),
            raw=raw,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config: {exc}") from exc


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize config value {v!r}")


def dump_config(raw: dict) -> str:
    """Serialize a parsed config back to TOML (restricted to the schema we
    read: nested tables of scalars and arrays).  parse -> dump -> parse is
    idempotent."""
    lines = []

    def walk(table: dict, prefix: str):
        scalars = {k: v for k, v in table.items() if not isinstance(v, dict)}
        subtables = {k: v for k, v in table.items() if isinstance(v, dict)}
        if prefix and (scalars or not subtables):
            lines.append(f"[{prefix}]")
        for k, v in scalars.items():
            lines.append(f"{k} = {_toml_value(v)}")
        for k, v in subtables.items():
            walk(v, f"{prefix}.{k}" if prefix else k)

    walk(raw, "")
    return "\n".join(lines) + "\n"


def _build_cloud(spec: dict, horizon: float):
    kind = spec.get("type", "random")
    if kind == "explicit":
        pts = []
        for row in spec["points"]:
            if len(row) != 8:
                raise ConfigError("explicit cloud rows must have 8 coordinates")
            pts.append((SpacetimePoint(row[0], tuple(row[1:4])), SpacetimePoint(row[4], tuple(row[5:8]))))
        return tuple(pts)
    if kind == "random":
        count = int(spec.get("count", 4))
        radius = float(spec.get("radius", 1.0))
        gen = rng_stream(int(spec.get("seed", 1)), 0xC10CD)
        pts = []
        for _ in range(count):
            t1, t2 = gen.random(2) * horizon
            p = radius * (2.0 * gen.random(3) - 1.0)
            q = radius * (2.0 * gen.random(3) - 1.0)
            pts.append((SpacetimePoint(t1, tuple(p)), SpacetimePoint(t2, tuple(q))))
        return tuple(pts)
    raise ConfigError(f"unknown cloud type {kind!r}")


def _schedule(quad: QuadSpec, K: int, decay: int):
    """Geometrically decaying per-level budgets (deeper levels cost more per
    sample and contribute less)."""
    sched = []
    for k in range(max(K, 1)):
        if isinstance(quad.mode, MonteCarlo):
            samples = max(quad.mode.samples // (decay**k), 8)
            sched.append(replace(quad, mode=replace(quad.mode, samples=samples)))
        else:
            pppa = max(quad.mode.points_per_axis - 2 * k, 2)
            sched.append(replace(quad, mode=Deterministic(pppa)))
    return tuple(sched)


def _free_wave(run: RunConfig):
    if isinstance(run.free_spec, float):
        return fields.compact_support_free(run.free_spec), None
    wf = fields.make_free(run.free_spec)
    norm = None
    if isinstance(run.free_spec, fields.PlaneWaveProduct):
        norm = 1.0  # |psi| = 1 and min g = g(0) = 1
    return wf, norm


# ---------------------------------------------------------------------------
# subcommands


def cmd_bounds(run: RunConfig, out: Path) -> int:
    cfg = run.cfg
    tab = run.raw.get("bounds", {})
    rows = []

    def one_row(weight, label):
        if isinstance(weight, weights.GaussPoly):
            rep = weights.closed_form_bounds(cfg.lam, cfg.m1, cfg.m2, weight.alpha)
            row = {"family": "gauss_poly", "parameter": weight.alpha, "b0": rep.b0, "b1": rep.b1,
                   "b2": rep.b2, "b12": rep.b12, "total": rep.total, "contraction": rep.contraction}
        elif isinstance(weight, weights.Exponential):
            b0 = cfg.lam / (8.0 * math.pi * weight.gamma**2)
            if cfg.m1 == 0.0 and cfg.m2 == 0.0:
                row = {"family": "exponential", "parameter": weight.gamma, "b0": b0, "b1": 0.0,
                       "b2": 0.0, "b12": 0.0, "total": b0, "contraction": b0 < 1.0}
            else:
                try:
                    rep = weights.supremum_bounds(cfg.lam, cfg.m1, cfg.m2, weight)
                    row = {"family": "exponential", "parameter": weight.gamma, "b0": rep.b0, "b1": rep.b1,
                           "b2": rep.b2, "b12": rep.b12, "total": rep.total, "contraction": rep.contraction}
                except weights.BoundsUnavailableError:
                    row = {"family": "exponential", "parameter": weight.gamma, "b0": b0, "b1": None,
                           "b2": None, "b12": None, "total": None, "contraction": None,
                           "note": "bounds unavailable for this family"}
        elif isinstance(weight, weights.Flrw):
            b = weights.flrw_bound(cfg.lam, weight.gamma)
            row = {"family": "flrw", "parameter": weight.gamma, "b0": b, "b1": 0.0, "b2": 0.0,
                   "b12": 0.0, "total": b, "contraction": b < 1.0}
        else:
            raise ConfigError("unknown weight family")
        row["label"] = label
        rows.append(row)

    one_row(cfg.weight, "config")
    sweep = tab.get("sweep")
    if sweep:
        pname = sweep["parameter"]
        for v in sweep["values"]:
            if pname == "alpha":
                one_row(weights.GaussPoly(float(v)), f"alpha={v}")
            elif pname == "gamma" and isinstance(cfg.weight, weights.Flrw):
                one_row(replace(cfg.weight, gamma=float(v)), f"gamma={v}")
            elif pname == "gamma":
                one_row(weights.Exponential(float(v)), f"gamma={v}")
            else:
                raise ConfigError(f"unknown sweep parameter {pname!r}")

    n_masses = tab.get("n_masses")
    npart = None
    if n_masses:
        if not isinstance(cfg.weight, weights.GaussPoly):
            raise ConfigError("bounds.n_masses needs the gauss_poly family")
        npart = {"masses": list(map(float, n_masses)),
                 "total": weights.npart_bound(cfg.lam, n_masses, cfg.weight.alpha)}

    out.mkdir(parents=True, exist_ok=True)
    payload = {"rows": rows, "n_particle": npart, "coupling": cfg.lam, "masses": [cfg.m1, cfg.m2]}
    if "json" in run.formats:
        (out / "bounds.json").write_text(json.dumps(payload, indent=2, default=str) + "\n")
    if "csv" in run.formats:
        cols = ["label", "family", "parameter", "b0", "b1", "b2", "b12", "total", "contraction"]
        lines = [",".join(cols)]
        for r in rows:
            lines.append(",".join(
                "" if r.get(c) is None else (_fmt(r[c]) if isinstance(r.get(c), float) else str(r.get(c)))
                for c in cols
            ))
        (out / "bounds.csv").write_text("\n".join(lines) + "\n")
    sys.stdout.write(json.dumps(payload, indent=2, default=str) + "\n")
    return 0


def _evaluate_report(run: RunConfig, workers: int):
    cloud = _build_cloud(run.cloud_spec, run.horizon)
    schedule = _schedule(run.cfg.quad, run.truncation, run.budget_decay)
    psi_free, norm_free = _free_wave(run)
    spec = solver.SolveSpec(truncation=run.truncation, schedule=schedule, cloud=cloud, cfg=run.cfg)
    report = solver.neumann_evaluate(spec, psi_free, norm_free=norm_free, workers=workers)
    return spec, report


def _report_rows(report: solver.SolveReport, weight_family):
    rows = []
    for i, (x, y) in enumerate(report.points):
        coords = [x.t, *x.r, y.t, *y.r]
        wprod = float(weight_family.weight(x.t)) * float(weight_family.weight(y.t))
        for k in range(report.truncation + 1):
            val = report.partial_sum(k)[i]
            err = float(np.sqrt(np.sum(report.stage_stderr[i, :k] ** 2)))
            tail = ""
            if report.norm_a is not None and report.norm_a < 1.0 and report.norm_free is not None:
                tail = _fmt(solver.tail_bound(report.norm_a, k, report.norm_free, wprod))
            rows.append([*map(_fmt, coords), str(k), _fmt(val.real), _fmt(val.imag), _fmt(err), tail])
    return rows


def cmd_evaluate(run: RunConfig, out: Path, workers: int) -> int:
    spec, report = _evaluate_report(run, workers)
    out.mkdir(parents=True, exist_ok=True)
    header = ["x0", "x1", "x2", "x3", "y0", "y1", "y2", "y3", "stage", "real", "imag", "stderr", "tail_bound"]
    rows = _report_rows(report, run.cfg.weight)
    if "csv" in run.formats:
        (out / "evaluate.csv").write_text("\n".join([",".join(header)] + [",".join(r) for r in rows]) + "\n")
    if "json" in run.formats:
        payload = {
            "norm_a": report.norm_a,
            "norm_free": report.norm_free,
            "certified": report.certified,
            "notes": report.notes,
            "rows": [dict(zip(header, r)) for r in rows],
        }
        (out / "evaluate.json").write_text(json.dumps(payload, indent=2) + "\n")
    sys.stdout.write(f"evaluated {len(report.points)} points, K={report.truncation}, "
                     f"certified={report.certified}\n")
    return 0


def _verify_checks(run: RunConfig):
    checks = []

    def add(name, passed, margin, detail=""):
        checks.append({"name": name, "passed": bool(passed), "margin": float(margin), "detail": detail})

    ts = np.linspace(0.0, 100.0, 100_000)
    j = np.abs(bessel_j1_ratio(ts))
    add("bessel_j1_ratio_bound", j.max() <= 0.5, 0.5 - float(j.max()))
    ds = dawson(np.linspace(0.0, 50.0, 100_000))
    add("dawson_bound", np.abs(ds).max() < 0.6, 0.6 - float(np.abs(ds).max()))
    td = np.abs(np.linspace(0.0, 50.0, 100_000) * ds)
    add("t_dawson_bound", td.max() < 2.0 / 3.0, 2.0 / 3.0 - float(td.max()))

    sups = weights.suprema(weights.GaussPoly(1.0))
    closed = weights.SUPREMA_CLOSED_BOUNDS(1.0)
    add("suprema_equalities", abs(sups[0] - closed[0]) < 1e-8 and abs(sups[1] - closed[1]) < 1e-8,
        max(abs(sups[0] - closed[0]), abs(sups[1] - closed[1])))
    worst = max(sups[i] - closed[i] for i in range(2, 7))
    add("suprema_bounds", worst <= 1e-9, -worst)

    fam = run.cfg.weight
    hs = 1e-5
    grid = np.linspace(0.2, 1.8, 9)
    worst_rec = 0.0
    # n >= 2 for the FLRW family means nested adaptive quadrature; keep the
    # deep iterates to the closed-form families
    orders = (1,) if isinstance(fam, weights.Flrw) else (1, 2, 3)
    for n in orders:
        deriv = (np.asarray(weights.g_eval(fam, n, grid + hs)) - np.asarray(weights.g_eval(fam, n, grid - hs))) / (2 * hs)
        target = np.asarray(fam.chain(n - 1, grid))
        worst_rec = max(worst_rec, float(np.max(np.abs(deriv - target) / np.maximum(np.abs(target), 1e-30))))
    add("g_recurrence", worst_rec < 1e-6, 1e-6 - worst_rec)

    # pointwise massless bound on a plane-wave product (norm exactly 1);
    # the Flrw chain bounds the conformally rescaled operator, so drive that
    masses = (run.cfg.m1, run.cfg.m2)
    pw = fields.make_free(fields.PlaneWaveProduct(
        ((math.sqrt(0.25 + masses[0] ** 2), 0.5, 0.0, 0.0), (math.sqrt(0.09 + masses[1] ** 2), 0.0, 0.3, 0.0)),
        masses))
    gen = rng_stream(run.cfg.quad.seed, 0xB0D)
    worst_gap = -np.inf
    bound_cfg = replace(run.cfg, quad=QuadSpec(MonteCarlo(20000, 2), seed=run.cfg.quad.seed))
    op = a0_flrw_apply if isinstance(fam, weights.Flrw) else a0_apply
    for _ in range(4):
        t1, t2 = gen.random(2) * 1.5
        p = tuple(gen.random(3) - 0.5)
        q = tuple(gen.random(3) - 0.5)
        xx, yy = SpacetimePoint(t1, p), SpacetimePoint(t2, q)
        res = op(bound_cfg, pw, xx, yy)
        bound = weights.pointwise_bound_a0(run.cfg.lam, fam, xx.t, yy.t)
        worst_gap = max(worst_gap, abs(res.value) - 3.0 * res.stderr - bound)
    add("pointwise_a0_bound", worst_gap <= 0.0, -worst_gap)

    # telescoping (K=1) and initial coincidence on small clouds
    sched = (QuadSpec(MonteCarlo(64, 1), seed=3), QuadSpec(MonteCarlo(16, 1), seed=3))
    cloud = (
        (SpacetimePoint(0.8, (0.1, 0.0, 0.0)), SpacetimePoint(0.7, (-0.2, 0.1, 0.0))),
        (SpacetimePoint(0.5, (0.0, 0.3, 0.0)), SpacetimePoint(0.9, (0.0, 0.0, -0.1))),
    )
    spec1 = solver.SolveSpec(truncation=1, schedule=sched, cloud=cloud, cfg=replace(run.cfg, quad=sched[0]))
    rep1 = solver.neumann_evaluate(spec1, pw)
    stages = solver.make_stages(spec1.cfg, pw, 0, sched)
    tel_ok = True
    for i, (xx, yy) in enumerate(cloud):
        applied = solver.apply_to_stages(spec1.cfg, stages, xx, yy, sched)
        tel_ok = tel_ok and (applied[0].value == rep1.stage_values[i, 0])
    add("telescoping_K1", tel_ok, 0.0 if tel_ok else 1.0)

    pairs = [((0.3 * i, 0.0, 0.0), (0.0, 0.2 * i, 0.0)) for i in range(5)]
    try:
        n_checked = solver.initial_coincidence_test(replace(run.cfg, quad=sched[0]), pw, pairs, 1, sched)
        add("initial_coincidence", True, 0.0, f"{n_checked} pairs")
    except RuntimeError as exc:
        add("initial_coincidence", False, 1.0, str(exc))

    norm_a, _, how = solver.ledger_norm_bound(run.cfg)
    if norm_a is None or norm_a >= 1.0:
        add("contraction_flag", True, 0.0, f"uncertified tail ({how}); flag only, not a failure")
    else:
        add("contraction_flag", True, 1.0 - norm_a, f"certified ({how})")
    return checks


def cmd_verify(run: RunConfig, out: Path) -> int:
    checks = _verify_checks(run)
    all_passed = all(c["passed"] for c in checks)
    payload = {"checks": checks, "all_passed": all_passed}
    out.mkdir(parents=True, exist_ok=True)
    (out / "verify.json").write_text(json.dumps(payload, indent=2) + "\n")
    for c in checks:
        sys.stdout.write(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']} margin={c['margin']:.3g} {c['detail']}\n")
    return 0 if all_passed else 1


def cmd_propagation(run: RunConfig, out: Path) -> int:
    tab = run.raw.get("propagation", {})
    radius = float(tab.get("radius", 0.5))
    horizon = float(tab.get("horizon", 1.5))
    count = int(tab.get("exterior_points", 100))
    K = int(tab.get("truncation", 2))
    seed = int(tab.get("seed", 3))
    if run.cfg.m1 != 0.0 or run.cfg.m2 != 0.0:
        raise ConfigError("propagation runs require massless particles")
    psi_free = fields.compact_support_free(radius)
    gen = rng_stream(seed, 0xF00)
    pairs = []
    for _ in range(count):
        t1, t2 = gen.random(2) * horizon
        # slot-1 point outside the grown support |x| > radius + t1
        r1 = radius + t1 + 0.05 + gen.random() * horizon
        u1 = gen.normal(size=3)
        u1 /= np.linalg.norm(u1)
        r2 = gen.random() * (radius + t2)
        u2 = gen.normal(size=3)
        u2 /= np.linalg.norm(u2)
        pairs.append((SpacetimePoint(t1, tuple(r1 * u1)), SpacetimePoint(t2, tuple(r2 * u2))))
    schedule = _schedule(run.cfg.quad, K, run.budget_decay)
    report = solver.propagation_test(run.cfg, psi_free, pairs, K, schedule)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "radius": radius,
        "horizon": horizon,
        "checked": len(pairs),
        "violations": report.violations,
        "max_abs_value": float(np.max(np.abs(report.values))) if len(report.values) else 0.0,
        "passed": report.passed,
    }
    (out / "propagation.json").write_text(json.dumps(payload, indent=2) + "\n")
    sys.stdout.write(json.dumps(payload) + "\n")
    return 0 if report.passed else 1


def cmd_flrw(run: RunConfig, out: Path, workers: int) -> int:
    cfg = run.cfg
    if not isinstance(cfg.weight, weights.Flrw):
        raise ConfigError("flrw runs require the flrw weight family")
    cloud = _build_cloud(run.cloud_spec, run.horizon)
    schedule = _schedule(cfg.quad, run.truncation, run.budget_decay)
    chi_free, norm_free = _free_wave(run)
    spec = solver.SolveSpec(truncation=run.truncation, schedule=schedule, cloud=cloud, cfg=cfg)
    report = solver.flrw_solve(spec, chi_free, norm_free=norm_free)
    out.mkdir(parents=True, exist_ok=True)
    header = ["eta1", "x1", "x2", "x3", "eta2", "y1", "y2", "y3",
              "chi_real", "chi_imag", "psi_real", "psi_imag", "stderr"]
    rows = []
    chi_vals = report.chi_values
    err = report.base.stderr_total()
    for i, (x, y) in enumerate(cloud):
        rows.append([
            *map(_fmt, [x.t, *x.r, y.t, *y.r]),
            _fmt(chi_vals[i].real), _fmt(chi_vals[i].imag),
            _fmt(report.psi_values[i].real), _fmt(report.psi_values[i].imag), _fmt(err[i]),
        ])
    if "csv" in run.formats:
        (out / "flrw.csv").write_text("\n".join([",".join(header)] + [",".join(r) for r in rows]) + "\n")
    if "json" in run.formats:
        payload = {"bound": weights.flrw_bound(cfg.lam, cfg.weight.gamma),
                   "notes": report.base.notes,
                   "rows": [dict(zip(header, r)) for r in rows]}
        (out / "flrw.json").write_text(json.dumps(payload, indent=2) + "\n")
    sys.stdout.write(f"flrw run: {len(rows)} points, bound={weights.flrw_bound(cfg.lam, cfg.weight.gamma):.6g}\n")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lightcone",
                                     description="Light-cone integral-equation dynamics: bounds, evaluation, verification")
    parser.add_argument("command", choices=["bounds", "evaluate", "verify", "propagation", "flrw"])
    parser.add_argument("--config", required=True, help="TOML config file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the quadrature seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for cloud evaluation")
    args = parser.parse_args(argv)

    try:
        run = load_config(args.config, seed_override=args.seed)
        out = Path(args.out)
        if args.command == "bounds":
            return cmd_bounds(run, out)
        if args.command == "evaluate":
            return cmd_evaluate(run, out, max(args.threads, 1))
        if args.command == "verify":
            return cmd_verify(run, out)
        if args.command == "propagation":
            return cmd_propagation(run, out)
        if args.command == "flrw":
            return cmd_flrw(run, out, max(args.threads, 1))
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except (ValueError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
