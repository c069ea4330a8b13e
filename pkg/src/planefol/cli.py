"""Scenario orchestration and the command-line interface.

Pipelines run stages in dependency order (tameness, homology, periods,
melnikov, holonomy, theorem); the theorem stage compares the observed
commutation/exactness pattern against the rigidity implication and reports
CONSISTENT, VACUOUS (hypotheses fail, with certificates), or INCONSISTENT
(must not happen; accompanied by a numeric-quality audit).

Exit codes: 0 success, 1 hypotheses failed (VACUOUS), 2 numerical failure or
INCONSISTENT, 3 config error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DegenerateRatio, PlanefolError
from .fibration import TPath, build_fibration
from .holonomy import holonomy_word, melnikov_fit, commutation_defect
from .homology import (CycleClass, condition_faca, dynkin, intersection_matrix,
                       picard_lefschetz)
from .melnikov import melnikov_report
from .periods import (basis_at, basis_realizations, class_period, gm_derivative,
                      monodromy_loop, numeric_monodromy_matrix, ratio_monodromy_probe,
                      restrict_to_fiber)
from .polynomials import (BivarPoly, PlanarOneForm, critical_set, is_hyperelliptic,
                          parse_poly, relative_exactness, tameness_report)
from .report import (canonical_json, config_hash, cycle_csv, holonomy_samples_csv,
                     jsonable, melnikov_curve_csv, period_table_rows, report_text)
from .settings import DEFAULTS, Numerics

STAGES = ("tameness", "homology", "periods", "melnikov", "holonomy", "theorem")

STAGE_DEPS = {
    "tameness": (),
    "homology": ("tameness",),
    "periods": ("tameness", "homology"),
    "melnikov": ("tameness", "homology", "periods"),
    "holonomy": ("tameness", "homology"),
    "theorem": ("tameness", "homology", "periods", "melnikov", "holonomy"),
}

_KNOWN_FIELDS = {
    "f", "omega_dx", "omega_dy", "backend", "base_point", "cycles",
    "epsilons", "t_grid", "stages", "tolerances", "tol_scale", "probe_loops",
}


@dataclass
class Scenario:
    """Validated scenario: parsed polynomials plus run configuration."""

    raw: dict
    f: BivarPoly
    omega: PlanarOneForm
    backend: str
    base_point: complex | None
    cycles: list
    epsilons: tuple
    t_grid: list | None
    stages: list
    params: Numerics
    mu: int
    probe_loops: list = field(default_factory=list)


def _as_complex(v, label, errors):
    try:
        if isinstance(v, (int, float)):
            return complex(v)
        if isinstance(v, (list, tuple)) and len(v) == 2:
            return complex(float(v[0]), float(v[1]))
        if isinstance(v, dict) and set(v) <= {"re", "im"}:
            return complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
    except (TypeError, ValueError):
        pass
    errors.append(f"{label}: expected a number, [re, im], or {{re, im}}")
    return 0j


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a JSON scenario; raises ConfigError with *all*
    diagnostics, not just the first."""
    errors = []
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([f"config is not valid JSON: {e}"])
    if not isinstance(cfg, dict):
        raise ConfigError(["config must be a JSON object"])

    for key in cfg:
        if key not in _KNOWN_FIELDS:
            errors.append(f"unknown field: {key}")

    f = None
    if "f" not in cfg:
        errors.append("f: required field missing")
    else:
        try:
            f = parse_poly(str(cfg["f"]))
            if f.is_constant():
                errors.append("f: must be nonconstant")
                f = None
        except ValueError as e:
            errors.append(f"f: {e}")

    def _poly(name):
        try:
            return parse_poly(str(cfg.get(name, "0")))
        except ValueError as e:
            errors.append(f"{name}: {e}")
            return BivarPoly.zero()

    omega = PlanarOneForm(_poly("omega_dx"), _poly("omega_dy"))
    if omega.A.is_zero() and omega.B.is_zero():
        errors.append("omega_dx/omega_dy: the deformation form is zero")

    backend = cfg.get("backend", "hyperelliptic")
    if backend not in ("hyperelliptic", "holonomy-only"):
        errors.append(f"backend: unknown value {backend!r}")
    if backend == "hyperelliptic" and f is not None:
        g = is_hyperelliptic(f)
        if g is None or g.degree == float("-inf") or g.degree < 2:
            errors.append(
                "backend: hyperelliptic backend requires f = y^2 - g(x) "
                "with deg g >= 2")

    base_point = None
    if cfg.get("base_point") is not None:
        base_point = _as_complex(cfg["base_point"], "base_point", errors)

    tol_overrides = cfg.get("tolerances", {})
    params = DEFAULTS
    if not isinstance(tol_overrides, dict):
        errors.append("tolerances: must be an object")
    else:
        bad = [k for k in tol_overrides if not hasattr(DEFAULTS, k)
               or k.startswith("_")]
        for k in bad:
            errors.append(f"tolerances: unknown tolerance {k!r}")
        if not bad:
            try:
                params = DEFAULTS.replace(**{
                    k: (tuple(v) if isinstance(getattr(DEFAULTS, k), tuple)
                        else type(getattr(DEFAULTS, k))(v))
                    for k, v in tol_overrides.items()})
            except (TypeError, ValueError) as e:
                errors.append(f"tolerances: {e}")
    scale = cfg.get("tol_scale", 1.0)
    if not isinstance(scale, (int, float)) or scale <= 0:
        errors.append("tol_scale: must be a positive number")
    else:
        params = params.scaled(float(scale))

    mu = 0
    if f is not None and not errors:
        try:
            mu = critical_set(f, params).mu
        except PlanefolError as e:
            errors.append(f"f: {type(e).__name__}: {e}")
    elif f is not None:
        try:
            mu = critical_set(f, params).mu
        except PlanefolError:
            mu = 0

    cycles = cfg.get("cycles", None)
    if cycles is None:
        cycles = [0, 1] if mu >= 2 else [0] if mu == 1 else []
    if not isinstance(cycles, list) or not all(isinstance(c, int) for c in cycles):
        errors.append("cycles: must be a list of integers")
        cycles = []
    else:
        for c in cycles:
            if mu and not 0 <= c < mu:
                errors.append(f"cycles: index {c} out of range for mu = {mu}")

    eps_raw = cfg.get("epsilons", None)
    if eps_raw is None:
        epsilons = params.default_epsilons
    elif not isinstance(eps_raw, list) or not eps_raw:
        errors.append("epsilons: must be a nonempty list")
        epsilons = params.default_epsilons
    else:
        epsilons = tuple(_as_complex(v, f"epsilons[{k}]", errors)
                         for k, v in enumerate(eps_raw))
        if any(e == 0 for e in epsilons):
            errors.append("epsilons: values must be nonzero")

    t_grid = None
    if cfg.get("t_grid") is not None:
        if not isinstance(cfg["t_grid"], list):
            errors.append("t_grid: must be a list")
        else:
            t_grid = [_as_complex(v, f"t_grid[{k}]", errors)
                      for k, v in enumerate(cfg["t_grid"])]

    stages = cfg.get("stages", list(STAGES))
    if not isinstance(stages, list) or not stages:
        errors.append("stages: must be a nonempty list")
        stages = list(STAGES)
    else:
        for st in stages:
            if st not in STAGES:
                errors.append(f"stages: unknown stage {st!r}")
        stages = [st for st in STAGES if st in stages]
        for st in stages:
            missing = [d for d in STAGE_DEPS.get(st, ()) if d not in stages]
            if missing:
                errors.append(
                    f"stages: {st} requires {missing}; the set is not "
                    f"dependency-closed")
    if backend == "holonomy-only":
        blocked = [st for st in stages
                   if st in ("homology", "periods", "melnikov", "theorem")]
        for st in blocked:
            errors.append(f"stages: {st} requires the hyperelliptic backend")

    probe_loops = []
    if cfg.get("probe_loops") is not None:
        if not isinstance(cfg["probe_loops"], list):
            errors.append("probe_loops: must be a list of waypoint lists")
        else:
            for k, wp in enumerate(cfg["probe_loops"]):
                if not isinstance(wp, list) or len(wp) < 2:
                    errors.append(f"probe_loops[{k}]: need >= 2 waypoints")
                    continue
                pts = [_as_complex(p, f"probe_loops[{k}][{m}]", errors)
                       for m, p in enumerate(wp)]
                try:
                    probe_loops.append(TPath.from_waypoints(pts))
                except ValueError as e:
                    errors.append(f"probe_loops[{k}]: {e}")

    if errors:
        raise ConfigError(errors)
    return Scenario(cfg, f, omega, backend, base_point, cycles, epsilons,
                    t_grid, stages, params, mu, probe_loops)


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    report: dict
    attachments: dict
    had_error: bool


def _default_t_grid(model):
    r = 0.25 * min(abs(model.base - c) for c in model.critical.values)
    pts = [model.base]
    for k in range(8):
        ang = 2.0 * np.pi * k / 8
        pts.append(model.base + r * complex(np.cos(ang), np.sin(ang)))
    return pts


def run_scenario(s: Scenario) -> RunResult:
    """Run the requested stages in dependency order and assemble the report."""
    report = {
        "schema_version": 1,
        "provenance": {
            "config_hash": config_hash(s.raw),
            "package_version": __version__,
            "backend": s.backend,
            "tolerances": s.params.as_dict(),
            "seeds": {"pipeline": 0},
        },
    }
    attachments = {}
    had_error = False
    ctx = {}

    for stage in s.stages:
        runner = _STAGE_RUNNERS[stage]
        try:
            runner(s, ctx, report, attachments)
        except PlanefolError as e:
            report[stage] = {"error": str(e), "error_type": type(e).__name__}
            had_error = True
    return RunResult(report, attachments, had_error)


def _stage_tameness(s, ctx, report, attachments):
    rep = tameness_report(s.f, s.params)
    ctx["tameness"] = rep
    report["tameness"] = {
        "mu": rep.critical.mu,
        "critical_values": [jsonable(v) for v in rep.critical.values],
        "critical_points": [[jsonable(p[0]), jsonable(p[1])]
                            for p in rep.critical.points],
        "hessians_nonzero": rep.hessians_nonzero,
        "values_distinct": rep.values_distinct,
        "top_form_distinct_roots": rep.top_form_distinct_roots,
        "verdict": rep.verdict,
        "witnesses": jsonable(rep.witnesses),
        "notes": rep.notes,
    }


def _require_model(s, ctx):
    if "model" not in ctx:
        crit = ctx["tameness"].critical if "tameness" in ctx else None
        ctx["model"] = build_fibration(s.f, s.base_point, s.params, crit=crit)
        if ctx["model"].backend != "hyperelliptic":
            raise PlanefolError("stage requires the hyperelliptic backend")
    return ctx["model"]


def _stage_homology(s, ctx, report, attachments):
    model = _require_model(s, ctx)
    I = intersection_matrix(model)
    G = dynkin(I)
    ctx["form"] = I
    ctx["graph"] = G

    # calibrate the Picard-Lefschetz sign against the numeric monodromy
    mono = []
    sign_votes = []
    for i in range(model.mu):
        loop = monodromy_loop(model, i)
        res = numeric_monodromy_matrix(model, loop, params=s.params)
        mono.append(res)
        for sg in (+1, -1):
            if np.array_equal(picard_lefschetz(i, I, sg).matrix, res.integer):
                sign_votes.append(sg)
                break
        else:
            sign_votes.append(0)
    pl_sign = sign_votes[0] if sign_votes and all(
        v == sign_votes[0] and v != 0 for v in sign_votes) else 0
    ctx["pl_sign"] = pl_sign
    ctx["monodromy"] = mono
    operators = [picard_lefschetz(i, I, pl_sign or +1) for i in range(model.mu)]
    ctx["pl_ops"] = operators

    d1 = CycleClass.basis(s.cycles[0], model.mu) if s.cycles else None
    d2 = CycleClass.basis(s.cycles[1], model.mu) if len(s.cycles) > 1 else d1
    verdict = condition_faca(d1, d2, I) if d1 is not None else None
    ctx["condition6"] = verdict
    ctx["d1"], ctx["d2"] = d1, d2

    report["homology"] = {
        "intersection_matrix": I.matrix.tolist(),
        "dynkin": {
            "adjacency": {str(k + 1): [v + 1 for v in sorted(vs)]
                          for k, vs in dynkin(I).adjacency().items()},
            "connected": G.connected,
            "dot": G.to_dot(),
        },
        "strongly_tame_core": bool(
            ctx["tameness"].hessians_nonzero
            and ctx["tameness"].values_distinct and G.connected),
        "pl_sign": pl_sign,
        "pl_matrices": [op.matrix.tolist() for op in operators],
        "condition6": None if verdict is None else {
            "holds": verdict.holds,
            "branch": verdict.branch,
            "certificate": None if verdict.witness is None else list(verdict.witness),
        },
    }
    for i in range(model.mu):
        attachments[f"cycle_{i}.csv"] = cycle_csv(model.realize(i).loop)


def _stage_periods(s, ctx, report, attachments):
    model = _require_model(s, ctx)
    phi = restrict_to_fiber(s.omega, model)
    phi_p = phi.gm()
    ctx["phi"], ctx["phi_p"] = phi, phi_p
    t_grid = s.t_grid if s.t_grid is not None else _default_t_grid(model)
    ctx["t_grid"] = t_grid

    entries = []
    for t in t_grid:
        reals = basis_at(model, complex(t))
        for ci in s.cycles:
            coords = CycleClass.basis(ci, model.mu).coords
            for label, form in (("omega", phi), ("omega_prime", phi_p)):
                pv = class_period(model, coords, form, reals=reals,
                                  params=s.params)
                entries.append((f"delta_{ci}", label, complex(t), pv))
    attachments["periods_table.csv"] = period_table_rows(entries)

    mono = ctx.get("monodromy")
    mono_rows = []
    if mono:
        for i, res in enumerate(mono):
            mono_rows.append({
                "critical_value": jsonable(model.crit_value(i)),
                "integer_matrix": res.integer.tolist(),
                "max_deviation": res.deviation,
                "condition": res.condition,
            })

    probe_loops = s.probe_loops or [monodromy_loop(model, i)
                                    for i in range(model.mu)]
    try:
        probe = ratio_monodromy_probe(
            model, ctx["d1"].coords, s.omega, probe_loops, params=s.params)
        probe_out = {
            "base_ratio": jsonable(probe.base_ratio),
            "defects": [jsonable(d) for d in probe.defects],
            "single_valued": probe.single_valued,
            "flagged": probe.flagged,
            "tol": probe.tol,
        }
    except DegenerateRatio as e:
        probe_out = {"degenerate": True, "reason": str(e)}

    report["periods"] = {
        "t_grid": [jsonable(t) for t in t_grid],
        "form_basis": ["y dx gauss-manin tower"],
        "monodromy": mono_rows,
        "ratio_probe": probe_out,
    }


def _stage_melnikov(s, ctx, report, attachments):
    model = _require_model(s, ctx)
    t_grid = ctx.get("t_grid") or _default_t_grid(model)
    d1 = ctx["d1"].coords
    d2 = ctx["d2"].coords
    rep = melnikov_report(model, s.omega, d1, d2, t_grid, params=s.params)
    ctx["melnikov"] = rep
    report["melnikov"] = {
        "t_samples": [jsonable(t) for t in rep.t_samples],
        "m1": {label: [jsonable(pv.value) for pv in curve]
               for label, curve in rep.m1_curves.items()},
        "m2_det": [jsonable(pv.value) for pv in rep.m2_det],
        "m2_iterated": [jsonable(pv.value) for pv in rep.m2_iterated],
        "discrepancy": rep.discrepancy,
        "m1_zero": rep.m1_zero,
        "m2_zero": rep.m2_zero,
        "zero_tol": rep.zero_tol,
        "note": rep.note,
    }
    attachments["melnikov.csv"] = melnikov_curve_csv(rep)


def _stage_holonomy(s, ctx, report, attachments):
    model = _require_model(s, ctx)
    fits_out = {}
    samples_all = []
    for ci in s.cycles:
        samp = holonomy_word(model, s.omega, [(ci, +1)], s.epsilons,
                             (model.base,), s.params)
        samples_all.extend(samp.entries)
        fit = melnikov_fit(samp, order=2, params=s.params)[0]
        fits_out[f"delta_{ci}"] = {
            "m1": jsonable(fit.m1), "m2": jsonable(fit.m2),
            "m1_err": fit.m1_err, "m2_err": fit.m2_err,
            "richardson_spread": fit.richardson_spread,
        }
    defect = None
    if len(s.cycles) >= 2 and s.cycles[0] != s.cycles[1]:
        d1 = CycleClass.basis(s.cycles[0], model.mu).coords
        d2 = CycleClass.basis(s.cycles[1], model.mu).coords
        defect = commutation_defect(model, s.omega, d1, d2, s.epsilons,
                                    (model.base,), params=s.params)
        ctx["defect"] = defect
    from .holonomy import HolonomyMapSamples
    bag = HolonomyMapSamples(samples_all)
    attachments["holonomy_samples.csv"] = holonomy_samples_csv(bag)
    report["holonomy"] = {
        "epsilons": [jsonable(e) for e in s.epsilons],
        "fits": fits_out,
        "commutation": None if defect is None else {
            "defects": [jsonable(d) for d in defect.defects],
            "fitted_m2": jsonable(defect.fitted_m2),
            "m2_err": defect.m2_err,
            "commuting": defect.commuting,
            "tol_m2": defect.tol_m2,
        },
    }


def _stage_theorem(s, ctx, report, attachments):
    model = _require_model(s, ctx)
    tame = ctx["tameness"]
    graph = ctx["graph"]
    cond6 = ctx["condition6"]
    defect = ctx.get("defect")
    mel = ctx.get("melnikov")

    # working hypotheses: Morse data, distinct values, connected Dynkin
    # diagram, and the commutation criterion; the at-infinity flag is
    # reported by the tameness stage but does not gate the hyperelliptic
    # backend (the family satisfies the working hypotheses by construction)
    hypotheses = {
        "hessians_nonzero": tame.hessians_nonzero,
        "values_distinct": tame.values_distinct,
        "dynkin_connected": graph.connected,
        "condition6": bool(cond6 and cond6.holds),
    }
    hypotheses_ok = all(hypotheses.values())

    witness = relative_exactness(s.omega, s.f, params=s.params)
    omega_exact = witness.found and witness.Q is not None and witness.Q.is_zero()
    commuting = defect.commuting if defect is not None else None

    observations = {
        "commuting": commuting,
        "witness_found": witness.found,
        "witness_P": str(witness.P) if witness.found else None,
        "witness_Q": str(witness.Q) if witness.found else None,
        "witness_bounds": list(witness.bounds),
        "witness_bounds_hint": witness.bounds_hint,
        "omega_exact": omega_exact,
        "m2_identically_zero": mel.m2_zero if mel is not None else None,
    }

    certificates = {}
    if not hypotheses_ok:
        certificates = {
            "failed": [k for k, v in hypotheses.items() if not v],
            "condition6_certificate": (list(cond6.witness)
                if cond6 and cond6.witness is not None else None),
            "tameness_witnesses": jsonable(tame.witnesses),
        }
        verdict = "VACUOUS"
    elif commuting and not witness.found:
        verdict = "INCONSISTENT"
    elif (commuting is False) and omega_exact:
        verdict = "INCONSISTENT"
    else:
        verdict = "CONSISTENT"

    audit = None
    if verdict == "INCONSISTENT":
        audit = {
            "monodromy_max_deviation": max(
                (m.deviation for m in ctx.get("monodromy", [])), default=None),
            "melnikov_discrepancy": mel.discrepancy if mel else None,
            "commutation_defects": [jsonable(d) for d in defect.defects]
            if defect else None,
            "note": "theory forbids this pattern; inspect tolerances and "
                    "witness bounds",
        }

    report["theorem"] = {
        "verdict": verdict,
        "hypotheses": hypotheses,
        "observations": observations,
        "certificates": certificates or None,
        "audit": audit,
    }


_STAGE_RUNNERS = {
    "tameness": _stage_tameness,
    "homology": _stage_homology,
    "periods": _stage_periods,
    "melnikov": _stage_melnikov,
    "holonomy": _stage_holonomy,
    "theorem": _stage_theorem,
}


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def emit_report(result: RunResult, fmt: str = "json") -> dict:
    """Serialize a run result; returns {filename: bytes}, deterministic."""
    js = canonical_json(result.report).encode()
    if fmt == "json":
        return {"report.json": js}
    if fmt == "text":
        return {"report.txt": report_text(result.report).encode()}
    if fmt == "csv-bundle":
        out = {"report.json": js}
        for name, content in sorted(result.attachments.items()):
            out[name] = content.encode()
        return out
    raise ValueError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def _build_parser():
    p = argparse.ArgumentParser(
        prog="planefol",
        description="Vanishing cycles, Melnikov functions, and holonomy for "
                    "plane polynomial foliations df + eps*omega")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
            ("analyze", "run the configured stages and emit a report"),
            ("periods", "period tables and numeric monodromy only"),
            ("melnikov", "Melnikov curves (determinant and iterated)"),
            ("holonomy", "holonomy samples and epsilon-expansion fits"),
            ("verify", "full pipeline; exit code reflects the verdict")):
        q = sub.add_parser(name, help=helptext)
        q.add_argument("--config", required=True, help="scenario JSON path")
        q.add_argument("--out", default=".", help="output directory")
        q.add_argument("--format", default="json",
                       choices=("json", "csv-bundle", "text"))
        q.add_argument("--stage", action="append", default=None,
                       help="restrict to this stage (repeatable)")
        q.add_argument("--tol-scale", type=float, default=None,
                       help="scale all tolerances by this factor")
    return p


_COMMAND_STAGES = {
    "periods": ["tameness", "homology", "periods"],
    "melnikov": ["tameness", "homology", "periods", "melnikov"],
    "holonomy": ["tameness", "homology", "holonomy"],
    "verify": list(STAGES),
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 3
    try:
        scenario = parse_scenario(text)
        if args.tol_scale is not None:
            if args.tol_scale <= 0:
                raise ConfigError(["--tol-scale must be positive"])
            scenario.params = scenario.params.scaled(args.tol_scale)
        if args.command in _COMMAND_STAGES:
            scenario.stages = _COMMAND_STAGES[args.command]
        if args.stage:
            unknown = [st for st in args.stage if st not in STAGES]
            if unknown:
                raise ConfigError([f"--stage: unknown stage {u!r}"
                                   for u in unknown])
            chosen = [st for st in STAGES if st in args.stage]
            missing = [d for st in chosen for d in STAGE_DEPS[st]
                       if d not in chosen]
            if missing:
                raise ConfigError(
                    [f"--stage selection is not dependency-closed; missing "
                     f"{sorted(set(missing))}"])
            scenario.stages = chosen
        if scenario.backend == "holonomy-only":
            blocked = [st for st in scenario.stages
                       if st in ("homology", "periods", "melnikov", "theorem")]
            if blocked:
                raise ConfigError(
                    [f"stages: {st} requires the hyperelliptic backend"
                     for st in blocked])
    except ConfigError as e:
        for msg in e.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 3

    result = run_scenario(scenario)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    files = emit_report(result, args.format)
    for name, content in files.items():
        (outdir / name).write_bytes(content)
    verdict = None
    if isinstance(result.report.get("theorem"), dict):
        verdict = result.report["theorem"].get("verdict")
    summary = f"planefol {args.command}: wrote {', '.join(sorted(files))}"
    if verdict:
        summary += f" | verdict: {verdict}"
    print(summary)
    if result.had_error:
        return 2
    if args.command == "verify" or "theorem" in scenario.stages:
        if verdict == "VACUOUS":
            return 1
        if verdict == "INCONSISTENT":
            return 2
        if verdict is None:
            return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
