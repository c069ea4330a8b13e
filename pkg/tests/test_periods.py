"""Abelian integrals, Gauss-Manin derivative, continuation, iterated integrals."""
import mpmath as mp
import numpy as np
import pytest

from planefol.errors import DegenerateRatio, PoleOnPath, ToleranceNotMet
from planefol.fibration import FiberLoop, TPath, commutator_word, loop_word
from planefol.homology import CycleClass, intersection_matrix, picard_lefschetz
from planefol.periods import (FiberForm, basis_at, basis_realizations,
                              class_period, continue_period, gm_derivative,
                              iterated_integral, monodromy_loop,
                              numeric_monodromy_matrix, period,
                              ratio_monodromy_probe, restrict_to_fiber)
from planefol.polynomials import BivarPoly, PlanarOneForm, parse_poly
from planefol.settings import DEFAULTS

from conftest import GM_YDX_D0_REF, P_YDX_D0_REF, PL_SIGN_REF


@pytest.fixture(scope="module")
def phi_ydx(reference_model, omega_ydx):
    return restrict_to_fiber(omega_ydx, reference_model)


# -- restriction and Gauss-Manin rules ----------------------------------------

def test_restrict_examples(reference_model):
    model = reference_model
    w = PlanarOneForm(parse_poly("y"), BivarPoly.zero())
    phi = restrict_to_fiber(w, model)
    assert phi.terms == ((0, 1, 1.0),)

    # x dy -> x * g'(x) / (2y) dx with g' = 3x^2 - 3
    w2 = PlanarOneForm(BivarPoly.zero(), parse_poly("x"))
    phi2 = restrict_to_fiber(w2, model)
    assert set(phi2.terms) == {(1, -1, -1.5), (3, -1, 1.5)}

    w3 = PlanarOneForm.d(parse_poly("x"))
    phi3 = restrict_to_fiber(w3, model)
    assert phi3.terms == ((0, 0, 1.0),)


def test_gm_term_rules(reference_model):
    g = reference_model.g_coeffs
    assert FiberForm([(0, 1, 1.0)], g).gm().terms == ((0, -1, 0.5),)
    assert FiberForm([(3, 0, 2.0)], g).gm().is_zero()
    assert FiberForm([(0, -1, 1.0)], g).gm().terms == ((0, -3, -0.5),)


# -- periods -------------------------------------------------------------------

def test_period_of_dx_vanishes(reference_model):
    phi = FiberForm([(0, 0, 1.0)], reference_model.g_coeffs)
    for i in range(2):
        pv = period(reference_model.realize(i), phi)
        assert abs(pv.value) <= 1e-10


def test_period_reference_value_and_oracle(reference_model, phi_ydx):
    pv = period(reference_model.realize(0), phi_ydx)
    assert abs(pv.value - P_YDX_D0_REF) < 1e-10
    # independent oracle: high-precision real-axis quadrature of
    # 2i * int_0^sqrt(3) sqrt(3x - x^3) dx between the colliding branch points
    mp.mp.dps = 30
    J = mp.quad(lambda x: mp.sqrt(3 * x - x**3), [0, mp.sqrt(3)])
    assert abs(abs(pv.value) - 2 * float(J)) < 1e-12
    assert pv.err <= 1e-10


def test_gm_reference_value_and_oracle(reference_model, phi_ydx):
    pv = period(reference_model.realize(0), phi_ydx.gm())
    assert abs(pv.value - GM_YDX_D0_REF) < 1e-10
    # (1/2) y^{-1} dx over the slit-collapsed loop: the 1/2 cancels against
    # the two sides, leaving int_0^sqrt(3) dx / sqrt(3x - x^3)
    mp.mp.dps = 30
    K = mp.quad(lambda x: 1 / mp.sqrt(3 * x - x**3), [0, 1, mp.sqrt(3)])
    assert abs(abs(pv.value) - float(K)) < 1e-11


def test_shrinking_period_scaling(reference_model, phi_ydx):
    # vanishing-cycle period of y dx scales like |t - c| (oracle-derived
    # exponent 1 for the nondegenerate local model)
    from planefol.fibration import realize_vanishing_cycle
    p4 = period(realize_vanishing_cycle(reference_model, 0, 2 - 1e-4), phi_ydx)
    p3 = period(realize_vanishing_cycle(reference_model, 0, 2 - 1e-3), phi_ydx)
    ratio = abs(p4.value) / abs(p3.value)
    assert abs(ratio - 0.1) < 0.25 * 0.1


def test_dq_periods_vanish_50_random(reference_model):
    rng = np.random.default_rng(11)
    model = reference_model
    reals = basis_realizations(model)
    for k in range(50):
        q = BivarPoly.zero()
        for _ in range(4):
            i, j = int(rng.integers(0, 6)), int(rng.integers(0, 6))
            if i + j <= 5:
                q = q + BivarPoly.monomial(int(rng.integers(-3, 4)), i, j)
        if q.is_zero():
            continue
        phi = restrict_to_fiber(PlanarOneForm.d(q), model)
        pv = period(reals[k % 2], phi)
        assert abs(pv.value) <= 1e-9


def test_gm_contract_two_pairs(reference_model, phi_ydx):
    # symbolic derivative vs central differences via transported cycles
    h = 1e-4
    plus = basis_at(reference_model, h)
    minus = basis_at(reference_model, -h)
    for i in range(2):
        fd = (period(plus[i], phi_ydx).value
              - period(minus[i], phi_ydx).value) / (2 * h)
        sym = period(reference_model.realize(i), phi_ydx.gm()).value
        assert abs(sym - fd) <= 1e-6


def test_pole_on_path(reference_model):
    g = reference_model.g_coeffs
    # synthetic loop passing through a branch point (y = 0 at a sample)
    r3 = np.sqrt(3)
    xs = np.array([r3, r3 + 0.1, r3 + 0.1j, r3])
    ys = np.sqrt(np.polynomial.polynomial.polyval(xs, g) + 0j)
    loop = FiberLoop(0j, xs, ys, closed=True)
    with pytest.raises(PoleOnPath):
        period(loop, FiberForm([(0, -1, 1.0)], g))


def test_tolerance_not_met(reference_model, phi_ydx):
    with pytest.raises(ToleranceNotMet):
        period(reference_model.realize(0), phi_ydx.gm().gm(), tol=1e-18)


# -- continuation and monodromy ---------------------------------------------------

def test_continue_contractible(reference_model, phi_ydx):
    loop = TPath.from_waypoints([0, 0.3 + 0.4j, -0.4 + 0.2j, 0])
    before, after = continue_period(reference_model, (1, 0), phi_ydx, loop)
    assert abs(after.value - before.value) <= 1e-9


def test_continue_own_loop_fixed(reference_model, phi_ydx):
    # <delta, delta> = 0 forces invariance around the cycle's own value
    loop = monodromy_loop(reference_model, 0)
    before, after = continue_period(reference_model, (1, 0), phi_ydx, loop)
    assert abs(after.value - before.value) <= 1e-8


def test_continue_matches_pl_operator(reference_model, phi_ydx):
    model = reference_model
    I = intersection_matrix(model)
    op = picard_lefschetz(0, I, PL_SIGN_REF)
    loop = monodromy_loop(model, 0)
    before, after = continue_period(model, (0, 1), phi_ydx, loop)
    image = op.apply(CycleClass.basis(1, 2)).coords
    predicted = class_period(model, image, phi_ydx).value
    assert abs(after.value - predicted) <= 1e-8


def test_numeric_monodromy_matches_pl(reference_model):
    model = reference_model
    I = intersection_matrix(model)
    for i in range(2):
        res = numeric_monodromy_matrix(model, monodromy_loop(model, i))
        assert res.deviation <= 1e-6
        expected = picard_lefschetz(i, I, PL_SIGN_REF).matrix
        assert np.array_equal(res.integer, expected)
        assert np.array_equal(res.integer.T @ I.matrix @ res.integer, I.matrix)


def test_numeric_monodromy_contractible_identity(reference_model):
    loop = TPath.from_waypoints([0, 0.3 + 0.3j, -0.3 + 0.3j, 0])
    res = numeric_monodromy_matrix(reference_model, loop)
    assert np.array_equal(res.integer, np.eye(2, dtype=int))
    assert res.deviation <= 1e-8


def test_monodromy_composition_path_order(reference_model):
    # loop around both critical values equals the product of the two
    # single-value loops in path order
    import math
    from planefol.fibration import ArcLeg, LineLeg
    model = reference_model
    m0 = numeric_monodromy_matrix(model, monodromy_loop(model, 0)).integer
    m1 = numeric_monodromy_matrix(model, monodromy_loop(model, 1)).integer
    big = TPath((LineLeg(0.0, 2.8j),
                 ArcLeg(0.0, 2.8, math.pi / 2, math.pi / 2 + 2 * math.pi),
                 LineLeg(2.8j, 0.0)))
    res = numeric_monodromy_matrix(model, big)
    assert res.deviation <= 1e-6
    assert np.array_equal(res.integer, m1 @ m0) or \
        np.array_equal(res.integer, m0 @ m1)


# -- iterated integrals ------------------------------------------------------------

def test_iterated_k1_equals_period(reference_model, phi_ydx):
    r0 = reference_model.realize(0)
    v = iterated_integral(r0.loop, [phi_ydx])
    assert abs(v - period(r0, phi_ydx).value) <= 1e-10


def test_shuffle_identity_random(reference_model):
    rng = np.random.default_rng(5)
    model = reference_model
    for k in range(6):
        c1 = [complex(a, b) for a, b in rng.normal(size=(3, 2))]
        f1 = FiberForm([(0, 1, c1[0]), (1, 1, c1[1])], model.g_coeffs)
        f2 = FiberForm([(0, -1, c1[2]), (1, 0, 1.0)], model.g_coeffs)
        loop = model.realize(k % 2).loop
        i12 = iterated_integral(loop, [f1, f2])
        i21 = iterated_integral(loop, [f2, f1])
        p1 = period(loop, f1).value
        p2 = period(loop, f2).value
        assert abs(i12 + i21 - p1 * p2) <= 1e-8 * max(1.0, abs(p1 * p2))


def test_concatenation_identity(reference_model, phi_ydx):
    # int_{ab} n1 n2 = int_a n1 n2 + int_b n1 n2 + int_a n1 * int_b n2
    model = reference_model
    phi2 = phi_ydx.gm()
    a = loop_word(model, [(0, +1)])
    b = loop_word(model, [(0, +1), (1, +1)])   # shares the base point of a
    ab = loop_word(model, [(0, +1), (0, +1), (1, +1)])
    lhs = iterated_integral(ab, [phi_ydx, phi2])
    rhs = (iterated_integral(a, [phi_ydx, phi2])
           + iterated_integral(b, [phi_ydx, phi2])
           + period(a, phi_ydx).value * period(b, phi2).value)
    assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(lhs))


def test_commutator_single_form_vanishes(reference_model, phi_ydx):
    w = commutator_word(reference_model, 0, 1)
    assert abs(iterated_integral(w, [phi_ydx])) <= 1e-8
    assert abs(iterated_integral(w, [phi_ydx.gm()])) <= 1e-8


def test_iterated_k3_runs(reference_model, phi_ydx):
    # general-word evaluator (slow path); shuffle-free smoke value
    small = reference_model.realize(0).loop.resampled(1, reference_model.g_coeffs)
    coarse = FiberLoop(small.t, small.xs[::8], small.ys[::8], closed=True)
    v = iterated_integral(coarse, [phi_ydx, phi_ydx, phi_ydx], tol=1e-4)
    p = period(coarse, phi_ydx).value
    # leading shuffle relation: int n n n = (int n)^3 / 3!
    assert abs(v - p**3 / 6.0) <= 1e-6 * max(1.0, abs(p) ** 3)


# -- ratio probe ---------------------------------------------------------------------

def test_ratio_probe_contractible_and_own_loop(reference_model, omega_ydx):
    model = reference_model
    loops = [TPath.from_waypoints([0, 0.2 + 0.3j, -0.2 + 0.3j, 0]),
             monodromy_loop(model, 0)]
    rep = ratio_monodromy_probe(model, (1, 0), omega_ydx, loops)
    assert rep.defects[0] <= 1e-9
    assert rep.single_valued[0]
    # around its own critical value the cycle is fixed, so the ratio returns
    assert rep.defects[1] <= 1e-8


def test_ratio_probe_degenerate_for_exact_form(reference_model, omega_exact):
    with pytest.raises(DegenerateRatio):
        ratio_monodromy_probe(reference_model, (1, 0), omega_exact,
                              [monodromy_loop(reference_model, 0)])
