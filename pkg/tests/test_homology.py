"""Integer homology layer: intersection form, PL operators, condition (6)."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from planefol.errors import SizeLimit
from planefol.homology import (CycleClass, DynkinGraph, IntersectionForm,
                               condition_faca, condition_faca_bruteforce,
                               dynkin, intersection_matrix,
                               monodromy_orbit_span, picard_lefschetz)

from conftest import SIGMA_REF


@pytest.fixture(scope="module")
def ref_form(reference_model):
    return intersection_matrix(reference_model)


# -- intersection form ---------------------------------------------------------

def test_reference_intersection_matrix(ref_form):
    # sigma recorded once as this suite's reference
    assert ref_form.matrix.tolist() == [[0, SIGMA_REF], [-SIGMA_REF, 0]]


def test_intersection_form_invariants(ref_form):
    m = ref_form.matrix
    assert np.array_equal(m, -m.T)
    assert np.all(np.diag(m) == 0)


def test_intersection_form_validation():
    with pytest.raises(ValueError):
        IntersectionForm(np.array([[0, 1], [1, 0]]))
    with pytest.raises(ValueError):
        IntersectionForm(np.array([[1, 1], [-1, 0]]))


def test_quartic_chain_structure(quartic_models):
    # brute-force crossing counts on the random quartic corpus: entries in
    # {0, +-1}, connected graph, and a chain (path graph) up to relabeling
    for model in quartic_models:
        I = intersection_matrix(model)
        assert np.all(np.abs(I.matrix) <= 1)
        G = dynkin(I)
        assert G.connected
        degrees = sorted(len(v) for v in G.adjacency().values())
        assert degrees == [1, 1, 2]
        assert len(G.edges) == 2


# -- Dynkin ----------------------------------------------------------------------

def test_dynkin_reference(ref_form):
    G = dynkin(ref_form)
    assert G.connected
    assert G.edges == [(0, 1)]
    assert "1 -- 2;" in G.to_dot()


def test_dynkin_disconnected_and_single():
    G0 = dynkin(IntersectionForm(np.zeros((2, 2), dtype=int)))
    assert not G0.connected and G0.edges == []
    G1 = dynkin(IntersectionForm(np.zeros((1, 1), dtype=int)))
    assert G1.connected


# -- Picard-Lefschetz --------------------------------------------------------------

def test_pl_fixes_own_cycle(ref_form):
    for i in range(2):
        op = picard_lefschetz(i, ref_form, +1)
        e = CycleClass.basis(i, 2)
        assert op.apply(e).coords == e.coords


def test_pl_chain_action(ref_form):
    op = picard_lefschetz(0, ref_form, +1)
    img = op.apply(CycleClass.basis(1, 2)).coords
    assert img in ((1, 1), (-1, 1))


def test_pl_zero_form_identity():
    form = IntersectionForm(np.zeros((3, 3), dtype=int))
    op = picard_lefschetz(1, form, +1)
    assert np.array_equal(op.matrix, np.eye(3, dtype=int))


@settings(max_examples=60, deadline=None)
@given(arrays(np.int64, (4, 4), elements=st.integers(-3, 3)),
       st.integers(0, 3), st.sampled_from([1, -1]))
def test_pl_preserves_form_and_unipotent(raw, i, sign):
    m = np.triu(raw, 1)
    form = IntersectionForm(m - m.T)
    op = picard_lefschetz(i, form, sign)
    assert op.preserves(form)
    assert op.unipotent()
    # exact integer inverse
    assert np.array_equal(op.matrix @ op.inverse_matrix(), np.eye(4, dtype=int))


# -- orbits -----------------------------------------------------------------------

def test_orbit_rank_reference(ref_form):
    ops = [picard_lefschetz(i, ref_form, +1) for i in range(2)]
    for i in range(2):
        rank, exhausted = monodromy_orbit_span(CycleClass.basis(i, 2), ops)
        assert rank == 2


def test_orbit_degenerate_form():
    form = IntersectionForm(np.zeros((2, 2), dtype=int))
    ops = [picard_lefschetz(i, form, +1) for i in range(2)]
    rank, _ = monodromy_orbit_span(CycleClass.basis(0, 2), ops)
    assert rank == 1


def test_orbit_identity_operators():
    rank, _ = monodromy_orbit_span(CycleClass.of([1, 0]),
                                   [np.eye(2, dtype=int)])
    assert rank == 1


def test_orbit_rank_quartics(quartic_models):
    for model in quartic_models:
        I = intersection_matrix(model)
        ops = [picard_lefschetz(i, I, +1) for i in range(model.mu)]
        for i in range(model.mu):
            rank, _ = monodromy_orbit_span(CycleClass.basis(i, model.mu), ops)
            assert rank == model.mu


# -- condition (6) ------------------------------------------------------------------

def test_condition_faca_documented_cases(ref_form):
    d1 = CycleClass.basis(0, 2)
    d2 = CycleClass.basis(1, 2)
    v = condition_faca(d1, d2, ref_form)
    assert v.holds                       # <delta_1, delta_2> != 0
    v2 = condition_faca(d1, d1, ref_form)
    assert not v2.holds
    assert v2.witness == (0, 1)          # delta_2 violates
    v3 = condition_faca(d1, CycleClass.of([0, 0]), ref_form)
    assert v3.holds and v3.branch == "L2_zero"


def test_condition_faca_matches_bruteforce_documented(ref_form):
    cases = [(CycleClass.basis(0, 2), CycleClass.basis(1, 2)),
             (CycleClass.basis(0, 2), CycleClass.basis(0, 2)),
             (CycleClass.basis(0, 2), CycleClass.of([0, 0])),
             (CycleClass.basis(0, 2), CycleClass.of([1, 1]))]
    for d1, d2 in cases:
        fast = condition_faca(d1, d2, ref_form)
        brute = condition_faca_bruteforce(d1, d2, ref_form, 5)
        assert fast.holds == brute.holds


def test_condition_faca_agreement_200_random():
    from conftest import faca_agreement_trials
    ok, counterexample = faca_agreement_trials(200)
    assert ok, counterexample


def test_bruteforce_size_limit():
    form = IntersectionForm(np.zeros((7, 7), dtype=int))
    with pytest.raises(SizeLimit):
        condition_faca_bruteforce(CycleClass.basis(0, 7),
                                  CycleClass.basis(1, 7), form, 5)


def test_bruteforce_zero_form_vacuous():
    form = IntersectionForm(np.zeros((3, 3), dtype=int))
    v = condition_faca_bruteforce(CycleClass.basis(0, 3),
                                  CycleClass.basis(1, 3), form, 2)
    assert v.holds
