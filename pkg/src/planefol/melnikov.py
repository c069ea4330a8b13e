"""Melnikov functions of the deformation df + eps*omega.

M1 over a cycle class is the calibrated period of omega; the commutator M2
is evaluated both by the 2x2 determinant of periods and directly as a
length-2 iterated integral over the realized commutator word, and the two
must agree to quadrature tolerance.

Sign convention: the published values match the holonomy expansion
h_eps(t) - t = eps*M1 + eps^2*M2 + ...  With the loop orientation fixed by
the realization convention this calibrates once to M1 = -period(omega) and
M2 = +det; the calibration is re-derived and asserted by the test suite.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .fibration import FibrationModel, loop_word
from .holonomy import commutator_letters, holonomy_word, melnikov_fit
from .homology import CycleClass
from .periods import (FiberForm, PeriodValue, basis_at, class_period,
                      iterated_integral, restrict_to_fiber)
from .polynomials import PlanarOneForm
from .settings import DEFAULTS, Numerics

M1_SIGN = -1
M2_SIGN = +1


def m1(model: FibrationModel, cls, omega: PlanarOneForm, t_samples,
       tol: float | None = None, params: Numerics | None = None):
    """First Melnikov function M1(t) = M1_SIGN * int_{delta_t} omega."""
    params = params or model.params
    coords = CycleClass.of(cls).coords
    phi = restrict_to_fiber(omega, model)
    out = []
    for t in t_samples:
        reals = basis_at(model, complex(t))
        pv = class_period(model, coords, phi, reals=reals, tol=tol, params=params)
        out.append(PeriodValue(M1_SIGN * pv.value, pv.err,
                               {"t": complex(t), "class": coords}))
    return out


def _det_at(model, d1, d2, phi, phi_p, t, tol, params):
    reals = basis_at(model, complex(t))
    a1 = class_period(model, d1, phi, reals=reals, tol=tol, params=params)
    a2 = class_period(model, d2, phi, reals=reals, tol=tol, params=params)
    b1 = class_period(model, d1, phi_p, reals=reals, tol=tol, params=params)
    b2 = class_period(model, d2, phi_p, reals=reals, tol=tol, params=params)
    det = a1.value * b2.value - a2.value * b1.value
    err = (abs(a1.value) * b2.err + abs(b2.value) * a1.err
           + abs(a2.value) * b1.err + abs(b1.value) * a2.err)
    return det, err


def m2_commutator_det(model: FibrationModel, d1, d2, omega: PlanarOneForm,
                      t_samples, tol: float | None = None,
                      params: Numerics | None = None):
    """M2 of the commutator (d1, d2) via the determinant of periods."""
    params = params or model.params
    c1 = CycleClass.of(d1).coords
    c2 = CycleClass.of(d2).coords
    phi = restrict_to_fiber(omega, model)
    phi_p = phi.gm()
    out = []
    for t in t_samples:
        det, err = _det_at(model, c1, c2, phi, phi_p, t, tol, params)
        out.append(PeriodValue(M2_SIGN * det, err,
                               {"t": complex(t), "d1": c1, "d2": c2,
                                "variant": "det"}))
    return out


def m2_commutator_iterated(model: FibrationModel, d1, d2,
                           omega: PlanarOneForm, t_samples,
                           tol: float | None = None,
                           params: Numerics | None = None):
    """M2 of the commutator via the length-2 iterated integral.

    The commutator word is realized as one concatenated on-fiber loop
    d1 * d2 * d1^{-1} * d2^{-1} (letters conjugated to a common base point).
    """
    params = params or model.params
    c1 = CycleClass.of(d1).coords
    c2 = CycleClass.of(d2).coords
    phi = restrict_to_fiber(omega, model)
    phi_p = phi.gm()
    letters = commutator_letters(c1, c2)
    out = []
    for t in t_samples:
        if not letters or all(c == 0 for c in c1) or all(c == 0 for c in c2):
            out.append(PeriodValue(0j, 0.0, {"t": complex(t), "variant": "iterated"}))
            continue
        loop = loop_word(model, letters, complex(t))
        val = iterated_integral(loop, [phi, phi_p], tol=tol, params=params)
        out.append(PeriodValue(M2_SIGN * val, 0.0,
                               {"t": complex(t), "d1": c1, "d2": c2,
                                "variant": "iterated"}))
    return out


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class MelnikovReport:
    t_samples: list
    m1_curves: dict                   # cycle label -> [PeriodValue]
    m2_det: list
    m2_iterated: list
    discrepancy: float
    m1_zero: dict                     # cycle label -> bool
    m2_zero: bool
    zero_tol: float
    note: str = ""


def melnikov_report(model: FibrationModel, omega: PlanarOneForm,
                    d1, d2, t_samples, tol: float | None = None,
                    params: Numerics | None = None) -> MelnikovReport:
    """Evaluate M1 for both commutator factors and M2 in both variants."""
    params = params or model.params
    t_samples = [complex(t) for t in t_samples]
    curves = {}
    zeros = {}
    labels = {"d1": d1, "d2": d2}
    for label, cls in labels.items():
        curve = m1(model, cls, omega, t_samples, tol=tol, params=params)
        curves[label] = curve
        enough = len(t_samples) >= params.zero_verdict_min_samples
        zeros[label] = enough and all(
            abs(pv.value) <= params.zero_verdict_tol for pv in curve)
    det = m2_commutator_det(model, d1, d2, omega, t_samples, tol=tol, params=params)
    itr = m2_commutator_iterated(model, d1, d2, omega, t_samples, tol=tol,
                                 params=params)
    disc = max(abs(a.value - b.value) for a, b in zip(det, itr))
    enough = len(t_samples) >= params.zero_verdict_min_samples
    m2_zero = enough and all(abs(pv.value) <= params.zero_verdict_tol for pv in det)
    note = ""
    if len(t_samples) < params.zero_verdict_min_samples:
        note = ("zero verdicts suppressed: fewer than "
                f"{params.zero_verdict_min_samples} t-samples")
    return MelnikovReport(t_samples, curves, det, itr, disc, zeros, m2_zero,
                          params.zero_verdict_tol, note)


def melnikov_csv(report: MelnikovReport, path: str) -> None:
    cols = ["t_re", "t_im"]
    for label in report.m1_curves:
        cols += [f"M1_{label}_re", f"M1_{label}_im"]
    cols += ["M2det_re", "M2det_im", "M2iter_re", "M2iter_im"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for k, t in enumerate(report.t_samples):
            row = [f"{t.real:.17g}", f"{t.imag:.17g}"]
            for label in report.m1_curves:
                v = report.m1_curves[label][k].value
                row += [f"{v.real:.17g}", f"{v.imag:.17g}"]
            vd = report.m2_det[k].value
            vi = report.m2_iterated[k].value
            row += [f"{vd.real:.17g}", f"{vd.imag:.17g}",
                    f"{vi.real:.17g}", f"{vi.imag:.17g}"]
            w.writerow(row)


# ---------------------------------------------------------------------------
# sign calibration against the holonomy module
# ---------------------------------------------------------------------------

def calibrate_signs(model: FibrationModel, omega: PlanarOneForm | None = None,
                    eps_list=(1e-2, 3e-3, 1e-3, 3e-4, 1e-4)):
    """Re-derive (M1_SIGN, M2_SIGN) from holonomy fits on a reference scenario.

    Returns the pair of signs making the published m1/m2 equal the fitted
    holonomy expansion coefficients; the frozen module constants must match.
    """
    from .polynomials import BivarPoly
    if omega is None:
        omega = PlanarOneForm(BivarPoly.y(), BivarPoly.zero())
    phi = restrict_to_fiber(omega, model)
    raw_p = class_period(model, CycleClass.basis(0, model.mu).coords, phi).value
    samp = holonomy_word(model, omega, [(0, +1)], eps_list, (model.base,))
    fit1 = melnikov_fit(samp, order=2)[0]
    s1 = +1 if abs(fit1.m1 - raw_p) < abs(fit1.m1 + raw_p) else -1

    phi_p = phi.gm()
    reals = basis_at(model, model.base)
    a1 = class_period(model, CycleClass.basis(0, model.mu).coords, phi, reals=reals).value
    a2 = class_period(model, CycleClass.basis(1, model.mu).coords, phi, reals=reals).value
    b1 = class_period(model, CycleClass.basis(0, model.mu).coords, phi_p, reals=reals).value
    b2 = class_period(model, CycleClass.basis(1, model.mu).coords, phi_p, reals=reals).value
    raw_det = a1 * b2 - a2 * b1
    letters = commutator_letters(CycleClass.basis(0, model.mu).coords,
                                 CycleClass.basis(1, model.mu).coords)
    samp2 = holonomy_word(model, omega, letters, eps_list, (model.base,))
    fit2 = melnikov_fit(samp2, order=2)[0]
    s2 = +1 if abs(fit2.m2 - raw_det) < abs(fit2.m2 + raw_det) else -1
    return s1, s2
