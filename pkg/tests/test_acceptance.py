"""Acceptance criteria at desk scale on the reference model
f = y^2 - x^3 + 3x (critical values +-2, mu = 2, base point t = 0).

Each criterion prints one PASS/FAIL line; run with `pytest -s` to see them.
"""
import json

import numpy as np
import pytest

from planefol.cli import parse_scenario, run_scenario, emit_report
from planefol.fibration import commutator_word, loop_word
from planefol.holonomy import (commutation_defect, holonomy_word, leaf_transport,
                               melnikov_fit)
from planefol.homology import (CycleClass, condition_faca,
                               condition_faca_bruteforce, intersection_matrix,
                               monodromy_orbit_span, picard_lefschetz)
from planefol.melnikov import m1, m2_commutator_det, m2_commutator_iterated
from planefol.periods import (basis_at, class_period, iterated_integral,
                              monodromy_loop, numeric_monodromy_matrix, period,
                              restrict_to_fiber)
from planefol.polynomials import (BivarPoly, PlanarOneForm, parse_poly,
                                  relative_exactness, residual_of_witness)

from conftest import faca_agreement_trials, random_one_form

T_SAMPLES = [0.0, 0.35, -0.45, 0.25 + 0.35j, -0.15 - 0.4j]
EPS_LIST = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4)


def _verdict(num, name, ok, detail=""):
    line = f"ACCEPTANCE {num:02d} {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  [{detail}]"
    print("\n" + line)
    assert ok, line


@pytest.fixture(scope="module")
def scenario_result():
    cfg = {
        "f": "y^2 - x^3 + 3*x",
        "omega_dx": "y",
        "omega_dy": "0",
        "backend": "hyperelliptic",
        "base_point": [0.0, 0.0],
        "cycles": [0, 1],
        "t_grid": [[t.real, t.imag] for t in map(complex, T_SAMPLES)]
                  + [[0.0, 0.3], [0.0, -0.3], [-0.35, 0.1]],
        "epsilons": list(EPS_LIST),
    }
    text = json.dumps(cfg)
    return text, run_scenario(parse_scenario(text))


def test_criterion_1_eq4_identity(reference_model, omega_ydx):
    model = reference_model
    rng = np.random.default_rng(20250801)
    forms = [omega_ydx] + [random_one_form(rng, max_degree=2)
                           for _ in range(10)]
    worst = 0.0
    for w in forms:
        det = m2_commutator_det(model, (1, 0), (0, 1), w, T_SAMPLES)
        itr = m2_commutator_iterated(model, (1, 0), (0, 1), w, T_SAMPLES)
        for a, b in zip(det, itr):
            dev = abs(a.value - b.value) / max(1.0, abs(a.value))
            worst = max(worst, dev)
    _verdict(1, "eq4-det-vs-iterated", worst <= 1e-6,
             f"11 forms x {len(T_SAMPLES)} samples, max rel dev {worst:.2e}")


def test_criterion_2_monodromy_consistency(reference_model):
    model = reference_model
    I = intersection_matrix(model)
    ok = True
    worst = 0.0
    for sign in (+1, -1):
        if all(np.array_equal(
                numeric_monodromy_matrix(model, monodromy_loop(model, i)).integer,
                picard_lefschetz(i, I, sign).matrix) for i in range(model.mu)):
            break
    else:
        ok = False
    for i in range(model.mu):
        res = numeric_monodromy_matrix(model, monodromy_loop(model, i))
        worst = max(worst, res.deviation)
        ok = ok and res.deviation <= 1e-6
        M = res.integer
        ok = ok and np.array_equal(M.T @ I.matrix @ M, I.matrix)
    _verdict(2, "monodromy-vs-picard-lefschetz", ok,
             f"max integer deviation {worst:.2e}")


def test_criterion_3_gauss_manin_contract(reference_model):
    model = reference_model
    rng = np.random.default_rng(99)
    h = 1e-4
    plus = basis_at(model, h)
    minus = basis_at(model, -h)
    base = basis_at(model, 0.0)
    worst = 0.0
    from planefol.periods import FiberForm
    for _ in range(50):
        terms = []
        for _ in range(int(rng.integers(1, 4))):
            i = int(rng.integers(0, 3))
            j = int(rng.integers(-1, 4))
            c = complex(rng.normal(), rng.normal())
            terms.append((i, j, c))
        phi = FiberForm(terms, model.g_coeffs)
        coords = tuple(int(c) for c in rng.integers(-2, 3, size=2))
        if all(c == 0 for c in coords):
            coords = (1, 0)
        sym = class_period(model, coords, phi.gm(), reals=base).value
        fd = (class_period(model, coords, phi, reals=plus).value
              - class_period(model, coords, phi, reals=minus).value) / (2 * h)
        worst = max(worst, abs(sym - fd))
    _verdict(3, "gauss-manin-finite-differences", worst <= 1e-6,
             f"50 pairs, max |sym - fd| = {worst:.2e}")


def test_criterion_4_holonomy_melnikov_cross_validation(reference_model,
                                                        omega_ydx):
    model = reference_model
    ok = True
    details = []
    for i in range(2):
        samp = holonomy_word(model, omega_ydx, [(i, +1)], EPS_LIST, (0.0,))
        fit = melnikov_fit(samp, order=2)[0]
        ref = m1(model, tuple(1 if k == i else 0 for k in range(2)),
                 omega_ydx, [0.0])[0].value
        rel = abs(fit.m1 - ref) / abs(ref)
        details.append(f"M1[{i}] rel {rel:.2e}")
        ok = ok and rel <= 1e-3
    det = m2_commutator_det(model, (1, 0), (0, 1), omega_ydx, [0.0])[0].value
    rep = commutation_defect(model, omega_ydx, (1, 0), (0, 1),
                             epsilons=EPS_LIST, t0_grid=(0.0,))
    assert abs(det) >= 1e-8
    rel2 = abs(rep.fitted_m2 - det) / abs(det)
    details.append(f"M2 rel {rel2:.2e}")
    ok = ok and rel2 <= 1e-3
    _verdict(4, "holonomy-melnikov-cross-validation", ok, ", ".join(details))


def test_criterion_5_rigidity_sanity(reference_model, omega_exact):
    model = reference_model
    worst = 0.0
    for eps in (1e-2, 1e-3, 1e-4):
        for i in range(2):
            loop = loop_word(model, [(i, +1)])
            t1, _ = leaf_transport(model.f, omega_exact, eps, loop, 0.0)
            worst = max(worst, abs(t1 - 0.0))
        wc = commutator_word(model, 0, 1)
        t1, _ = leaf_transport(model.f, omega_exact, eps, wc, 0.0)
        worst = max(worst, abs(t1 - 0.0))
    res = relative_exactness(omega_exact, model.f)
    witness_ok = res.found and \
        residual_of_witness(omega_exact, model.f, res.P, res.Q) == 0.0
    _verdict(5, "rigidity-exact-form", worst <= 1e-9 and witness_ok,
             f"max |h(t)-t| = {worst:.2e}, witness P = {res.P}")


def test_criterion_6_contrapositive(reference_model, omega_ydx,
                                    scenario_result):
    model = reference_model
    res = relative_exactness(omega_ydx, model.f)
    no_witness = not res.found
    I = intersection_matrix(model)
    pairing = I.pair(CycleClass.basis(0, 2), CycleClass.basis(1, 2))
    cond = condition_faca(CycleClass.basis(0, 2), CycleClass.basis(1, 2), I)
    rep = commutation_defect(model, omega_ydx, (1, 0), (0, 1),
                             epsilons=EPS_LIST, t0_grid=(0.0,))
    detected = abs(rep.fitted_m2) >= 1e-6 and not rep.commuting
    _, result = scenario_result
    verdict = result.report["theorem"]["verdict"]
    ok = no_witness and pairing != 0 and cond.holds and detected \
        and verdict == "CONSISTENT"
    _verdict(6, "theorem-contrapositive", ok,
             f"<d1,d2> = {pairing}, |M2_fit| = {abs(rep.fitted_m2):.3g}, "
             f"verdict {verdict}")


def test_criterion_7_condition6_agreement(reference_model):
    ok_random, counterexample = faca_agreement_trials(200, box_radius=5)
    I = intersection_matrix(reference_model)
    d1, d2 = CycleClass.basis(0, 2), CycleClass.basis(1, 2)
    cases = [(d1, d2), (d1, d1), (d1, CycleClass.of([0, 0]))]
    ok_cases = all(condition_faca(a, b, I).holds
                   == condition_faca_bruteforce(a, b, I, 5).holds
                   for a, b in cases)
    _verdict(7, "condition6-fast-vs-bruteforce", ok_random and ok_cases,
             "200 random forms (mu <= 6, r = 5) + 3 documented cases")


def test_criterion_8_monodromy_orbits(reference_model, quartic_models):
    ok = True
    for model in [reference_model] + list(quartic_models):
        I = intersection_matrix(model)
        ops = [picard_lefschetz(i, I, +1) for i in range(model.mu)]
        for i in range(model.mu):
            rank, _ = monodromy_orbit_span(CycleClass.basis(i, model.mu), ops)
            ok = ok and rank == model.mu
    _verdict(8, "orbit-spans-full-rank", ok,
             f"reference + {len(quartic_models)} quartic models")


def test_criterion_9_chen_properties(reference_model, omega_ydx):
    model = reference_model
    phi = restrict_to_fiber(omega_ydx, model)
    phi_p = phi.gm()
    rng = np.random.default_rng(17)
    worst_shuffle = 0.0
    from planefol.periods import FiberForm
    for k in range(4):
        f1 = FiberForm([(0, 1, complex(rng.normal(), rng.normal())),
                        (1, 1, complex(rng.normal(), rng.normal()))],
                       model.g_coeffs)
        f2 = FiberForm([(0, -1, complex(rng.normal(), rng.normal())),
                        (1, 0, 1.0)], model.g_coeffs)
        loop = model.realize(k % 2).loop
        i12 = iterated_integral(loop, [f1, f2])
        i21 = iterated_integral(loop, [f2, f1])
        pr = period(loop, f1).value * period(loop, f2).value
        worst_shuffle = max(worst_shuffle,
                            abs(i12 + i21 - pr) / max(1.0, abs(pr)))
    a = loop_word(model, [(0, +1)])
    b = loop_word(model, [(0, +1), (1, +1)])
    ab = loop_word(model, [(0, +1), (0, +1), (1, +1)])
    lhs = iterated_integral(ab, [phi, phi_p])
    rhs = (iterated_integral(a, [phi, phi_p])
           + iterated_integral(b, [phi, phi_p])
           + period(a, phi).value * period(b, phi_p).value)
    concat_dev = abs(lhs - rhs) / max(1.0, abs(lhs))
    wc = commutator_word(model, 0, 1)
    single = max(abs(iterated_integral(wc, [phi])),
                 abs(iterated_integral(wc, [phi_p])))
    ok = worst_shuffle <= 1e-8 and concat_dev <= 1e-8 and single <= 1e-8
    _verdict(9, "chen-shuffle-concat-commutator", ok,
             f"shuffle {worst_shuffle:.2e}, concat {concat_dev:.2e}, "
             f"single-form {single:.2e}")


def test_criterion_10_determinism(scenario_result):
    text, first = scenario_result
    second = run_scenario(parse_scenario(text))
    blob1 = emit_report(first, "json")["report.json"]
    blob2 = emit_report(second, "json")["report.json"]
    _verdict(10, "byte-identical-reports", blob1 == blob2,
             f"{len(blob1)} bytes")
