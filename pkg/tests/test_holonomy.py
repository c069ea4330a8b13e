"""Leaf transport, holonomy words, epsilon-expansion fits, commutation."""
import numpy as np
import pytest

from planefol.errors import DenominatorSmall, IllConditionedFit
from planefol.fibration import loop_word, realize_local_cycle
from planefol.holonomy import (HolonomyMapSamples, HolonomyTask,
                               commutation_defect, holonomy_word,
                               leaf_transport, melnikov_fit, run_task)
from planefol.melnikov import M1_SIGN, m1, m2_commutator_det
from planefol.polynomials import BivarPoly, PlanarOneForm, parse_poly
from planefol.settings import DEFAULTS

EPS_LIST = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4)


@pytest.fixture(scope="module")
def d0_loop(reference_model):
    return loop_word(reference_model, [(0, +1)])


def test_eps_zero_identity(reference_model, omega_ydx, d0_loop):
    t1, err = leaf_transport(reference_model.f, omega_ydx, 0.0, d0_loop, 0.02j)
    assert t1 == 0.02j and err == 0.0


def test_exact_form_identity_holonomy(reference_model, omega_exact, d0_loop):
    # integrable deformation: holonomy along a basis cycle is the identity
    for eps in (1e-2, 1e-3, 1e-4):
        t1, _ = leaf_transport(reference_model.f, omega_exact, eps, d0_loop, 0.0)
        assert abs(t1 - 0.0) <= 1e-9


def test_first_order_matches_m1(reference_model, omega_ydx, d0_loop):
    model = reference_model
    m1_val = m1(model, (1, 0), omega_ydx, [0.0])[0].value
    eps = 1e-3
    t1, _ = leaf_transport(model.f, omega_ydx, eps, d0_loop, 0.0)
    # residual bounded by the next expansion order
    assert abs(t1 - 0.0 - eps * m1_val) <= 10 * eps**2 * 5.0


def test_word_inverse_is_identity(reference_model, omega_ydx):
    loop = loop_word(reference_model, [(0, +1), (0, -1)])
    t1, _ = leaf_transport(reference_model.f, omega_ydx, 1e-3, loop, 0.0)
    assert abs(t1 - 0.0) <= 1e-10


def test_melnikov_fit_synthetic_recovery():
    a, b = 0.7 - 0.2j, -1.1 + 0.4j
    samples = HolonomyMapSamples()
    for eps in EPS_LIST:
        samples.add(eps, 0.0, 0.0 + a * eps + b * eps**2, 0.0)
    fit = melnikov_fit(samples, order=2)[0]
    assert abs(fit.m1 - a) <= 1e-10
    assert abs(fit.m2 - b) <= 1e-7


def test_melnikov_fit_requires_decade_span():
    samples = HolonomyMapSamples()
    for eps in (1e-3, 2e-3, 3e-3, 4e-3):
        samples.add(eps, 0.0, eps, 0.0)
    with pytest.raises(IllConditionedFit):
        melnikov_fit(samples, order=2)


def test_melnikov_fit_requires_enough_epsilons():
    samples = HolonomyMapSamples()
    for eps in (1e-2, 1e-3, 1e-4):
        samples.add(eps, 0.0, eps, 0.0)
    with pytest.raises(IllConditionedFit):
        melnikov_fit(samples, order=2)


def test_fitted_m1_matches_periods(reference_model, omega_ydx):
    model = reference_model
    for i in range(2):
        samp = holonomy_word(model, omega_ydx, [(i, +1)], EPS_LIST, (0.0,))
        fit = melnikov_fit(samp, order=2)[0]
        ref = m1(model, tuple(1 if k == i else 0 for k in range(2)),
                 omega_ydx, [0.0])[0].value
        assert abs(fit.m1 - ref) <= max(1e-6, 1e-3 * abs(ref))


def test_exact_form_fit_zero(reference_model, omega_exact):
    samp = holonomy_word(reference_model, omega_exact, [(0, +1)],
                         (1e-2, 3e-3, 1e-3, 3e-4), (0.0,))
    fit = melnikov_fit(samp, order=2)[0]
    assert abs(fit.m1) <= max(1e-8, 3 * fit.m1_err)
    assert abs(fit.m2) <= max(1e-5, 3 * fit.m2_err)


def test_commutator_fit_matches_det(reference_model, omega_ydx):
    model = reference_model
    det = m2_commutator_det(model, (1, 0), (0, 1), omega_ydx, [0.0])[0].value
    rep = commutation_defect(model, omega_ydx, (1, 0), (0, 1),
                             epsilons=EPS_LIST, t0_grid=(0.0,))
    assert not rep.commuting
    assert abs(rep.fitted_m2 - det) <= 1e-3 * abs(det)
    # first order vanishes on the commutator
    samp = holonomy_word(model, omega_ydx,
                         [(0, 1), (1, 1), (0, -1), (1, -1)], EPS_LIST, (0.0,))
    fit = melnikov_fit(samp, order=2)[0]
    assert abs(fit.m1) <= 1e-6


def test_commutator_exact_form_commutes(reference_model, omega_exact):
    rep = commutation_defect(reference_model, omega_exact, (1, 0), (0, 1),
                             epsilons=(1e-2, 3e-3, 1e-3, 1e-4), t0_grid=(0.0,))
    assert rep.commuting
    assert max(rep.defects) <= 1e-9


def test_reparametrization_invariance(reference_model, omega_ydx, d0_loop):
    model = reference_model
    eps = 1e-3
    t_a, _ = leaf_transport(model.f, omega_ydx, eps, d0_loop, 0.0)
    doubled = d0_loop.resampled(2, model.g_coeffs)
    t_b, _ = leaf_transport(model.f, omega_ydx, eps, doubled, 0.0)
    assert abs(t_a - t_b) <= 1e-9


def test_divergence_guard(reference_model, omega_ydx, d0_loop):
    with pytest.raises(DenominatorSmall):
        leaf_transport(reference_model.f, omega_ydx, 50.0, d0_loop, 0.0)


def test_task_validation(reference_model, omega_ydx, d0_loop):
    with pytest.raises(ValueError):
        HolonomyTask(reference_model.f, omega_ydx, d0_loop, (0.0, 1e-3), (0.0,))
    with pytest.raises(ValueError):
        HolonomyTask(reference_model.f, omega_ydx, d0_loop, (1e-3, 1e-3), (0.0,))


def test_commutation_defect_empty_eps(reference_model, omega_ydx):
    with pytest.raises(ValueError):
        commutation_defect(reference_model, omega_ydx, (1, 0), (0, 1),
                           epsilons=())


def test_local_cycle_holonomy_general_f():
    # holonomy-only backend: small cycle near a nondegenerate critical point
    # of a non-hyperelliptic f; exact deformation gives identity holonomy
    f = parse_poly("x^2 + y^2 + 0.3*x*y^2")
    omega = PlanarOneForm.d(parse_poly("x^2*y"))
    loop = realize_local_cycle(f, (0j, 0j), 0j, 0.05)
    t1, _ = leaf_transport(f, omega, 1e-3, loop, 0.05)
    assert abs(t1 - 0.05) <= 1e-9
    # and a non-exact deformation moves the transversal
    omega2 = PlanarOneForm(parse_poly("y"), BivarPoly.zero())
    t2, _ = leaf_transport(f, omega2, 1e-3, loop, 0.05)
    assert abs(t2 - 0.05) > 1e-9


def test_holonomy_samples_csv(tmp_path, reference_model, omega_ydx, d0_loop):
    task = HolonomyTask(reference_model.f, omega_ydx, d0_loop,
                        (1e-3,), (0.0, 0.05))
    samples = run_task(task)
    out = tmp_path / "samples.csv"
    samples.to_csv(str(out))
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "eps_re,eps_im,t0_re,t0_im,t1_re,t1_im,err"
    assert len(lines) == 3
