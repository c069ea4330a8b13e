"""Deterministic report serialization: canonical JSON and CSV builders.

Canonical JSON uses sorted keys and %.17g float formatting, so identical
runs produce byte-identical reports; complex numbers serialize as
{"im": ..., "re": ...} objects.
"""
from __future__ import annotations

import hashlib
import io
import json


def _fmt_float(x: float) -> str:
    if x != x or x in (float("inf"), float("-inf")):
        return "null"
    if x == int(x) and abs(x) < 1e15:
        return f"{x:.1f}"
    return f"{x:.17g}"


def jsonable(obj):
    """Normalize python values (incl. complex, numpy) into JSON-able trees."""
    import numpy as np
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if (v != v or v in (float("inf"), float("-inf"))) else v
    if isinstance(obj, (complex, np.complexfloating)):
        z = complex(obj)
        return {"re": jsonable(z.real), "im": jsonable(z.imag)}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    return str(obj)


def canonical_json(obj) -> str:
    """Serialize a JSON-able tree deterministically."""
    out = io.StringIO()
    _write(out, jsonable(obj))
    return out.getvalue()


def _write(out, obj):
    if obj is None:
        out.write("null")
    elif obj is True:
        out.write("true")
    elif obj is False:
        out.write("false")
    elif isinstance(obj, str):
        out.write(json.dumps(obj, ensure_ascii=True))
    elif isinstance(obj, int):
        out.write(str(obj))
    elif isinstance(obj, float):
        out.write(_fmt_float(obj))
    elif isinstance(obj, dict):
        out.write("{")
        for n, k in enumerate(sorted(obj)):
            if n:
                out.write(",")
            out.write(json.dumps(str(k), ensure_ascii=True))
            out.write(":")
            _write(out, obj[k])
        out.write("}")
    elif isinstance(obj, (list, tuple)):
        out.write("[")
        for n, v in enumerate(obj):
            if n:
                out.write(",")
            _write(out, v)
        out.write("]")
    else:  # pragma: no cover
        out.write(json.dumps(str(obj)))


def config_hash(config_dict) -> str:
    return hashlib.sha256(canonical_json(config_dict).encode()).hexdigest()


# ---------------------------------------------------------------------------
# CSV string builders
# ---------------------------------------------------------------------------

def _c17(x: float) -> str:
    return f"{x:.17g}"


def csv_lines(header, rows) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(row))
    return "\n".join(out) + "\n"


def cycle_csv(loop) -> str:
    n = max(len(loop.xs) - 1, 1)
    rows = []
    for k in range(len(loop.xs)):
        rows.append([_c17(k / n), _c17(loop.xs[k].real), _c17(loop.xs[k].imag),
                     _c17(loop.ys[k].real), _c17(loop.ys[k].imag)])
    return csv_lines(["s", "x_re", "x_im", "y_re", "y_im"], rows)


def period_table_rows(entries) -> str:
    """entries: (cycle_label, form_label, t, PeriodValue)."""
    rows = []
    for cyc, form, t, pv in entries:
        rows.append([str(cyc), str(form), _c17(t.real), _c17(t.imag),
                     _c17(pv.value.real), _c17(pv.value.imag), f"{pv.err:.3e}"])
    return csv_lines(["cycle", "form", "t_re", "t_im", "value_re", "value_im",
                      "err"], rows)


def melnikov_curve_csv(report) -> str:
    header = ["t_re", "t_im"]
    labels = list(report.m1_curves)
    for label in labels:
        header += [f"M1_{label}_re", f"M1_{label}_im"]
    header += ["M2det_re", "M2det_im", "M2iter_re", "M2iter_im"]
    rows = []
    for k, t in enumerate(report.t_samples):
        row = [_c17(t.real), _c17(t.imag)]
        for label in labels:
            v = report.m1_curves[label][k].value
            row += [_c17(v.real), _c17(v.imag)]
        vd = report.m2_det[k].value
        vi = report.m2_iterated[k].value
        row += [_c17(vd.real), _c17(vd.imag), _c17(vi.real), _c17(vi.imag)]
        rows.append(row)
    return csv_lines(header, rows)


def holonomy_samples_csv(samples) -> str:
    rows = []
    for (e, t0, t1, err) in samples.entries:
        rows.append([_c17(e.real), _c17(e.imag), _c17(t0.real), _c17(t0.imag),
                     _c17(t1.real), _c17(t1.imag), f"{err:.3e}"])
    return csv_lines(["eps_re", "eps_im", "t0_re", "t0_im", "t1_re", "t1_im",
                      "err"], rows)


# ---------------------------------------------------------------------------
# text rendering
# ---------------------------------------------------------------------------

def report_text(report: dict) -> str:
    lines = ["planefol report (schema_version "
             f"{report.get('schema_version')})", ""]
    tame = report.get("tameness")
    if tame:
        lines.append("[tameness]")
        lines.append(f"  mu = {tame['mu']}")
        lines.append(f"  hessians_nonzero = {tame['hessians_nonzero']}")
        lines.append(f"  values_distinct = {tame['values_distinct']}")
        lines.append(f"  top_form_distinct_roots = {tame['top_form_distinct_roots']}")
        lines.append(f"  verdict = {tame['verdict']}")
        for note in tame.get("notes", []):
            lines.append(f"  note: {note}")
        lines.append("")
    hom = report.get("homology")
    if hom:
        lines.append("[homology]")
        lines.append(f"  intersection_matrix = {hom['intersection_matrix']}")
        lines.append(f"  strongly_tame_core = {hom['strongly_tame_core']}")
        lines.append(f"  pl_sign = {hom['pl_sign']}")
        lines.append(f"  condition6 = {hom['condition6']}")
        lines.append("  dynkin DOT:")
        for ln in hom["dynkin"]["dot"].splitlines():
            lines.append(f"    {ln}")
        lines.append("")
    per = report.get("periods")
    if per:
        lines.append("[periods]")
        lines.append(f"  monodromy deviations = "
                     f"{[m['max_deviation'] for m in per['monodromy']]}")
        lines.append(f"  ratio_probe = {per.get('ratio_probe')}")
        lines.append("")
    mel = report.get("melnikov")
    if mel:
        lines.append("[melnikov]")
        lines.append(f"  max |M2det - M2iter| = {mel['discrepancy']}")
        lines.append(f"  m1_zero = {mel['m1_zero']}  m2_zero = {mel['m2_zero']}")
        lines.append("")
    hol = report.get("holonomy")
    if hol:
        lines.append("[holonomy]")
        lines.append(f"  commutation = {hol['commutation']}")
        lines.append("")
    theo = report.get("theorem")
    if theo:
        lines.append("[theorem]")
        lines.append(f"  verdict = {theo['verdict']}")
        lines.append(f"  hypotheses = {theo['hypotheses']}")
        lines.append(f"  observations = {theo['observations']}")
        if theo.get("audit"):
            lines.append(f"  audit = {theo['audit']}")
    return "\n".join(lines) + "\n"
