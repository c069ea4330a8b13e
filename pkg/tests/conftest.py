"""Shared fixtures: the reference model f = y^2 - x^3 + 3x and a seeded
corpus of random quartic hyperelliptic models."""
from fractions import Fraction

import numpy as np
import pytest

from planefol.fibration import build_fibration
from planefol.polynomials import BivarPoly, PlanarOneForm, QQi, critical_set, parse_poly

# Frozen suite references for the model f = y^2 - x^3 + 3x, base point 0.
# Computed once from the realization conventions (counterclockwise ellipse
# from the largest-real-part point, initial sheet Re y >= 0) and pinned;
# oracles in the tests recompute the magnitudes independently.
SIGMA_REF = -1                                  # <delta_0, delta_1>
PL_SIGN_REF = -1                                # empirical Picard-Lefschetz sign
P_YDX_D0_REF = -3.7844189443399494j             # period of y dx over delta_0
GM_YDX_D0_REF = 1.9923328995834906j             # period of (y dx)' over delta_0
M2_DET_REF = -15.079644737231007j               # commutator M2 at t = 0

QUARTIC_SEEDS = (0, 1, 3, 4, 6)


def make_quartic(seed: int):
    """Random quartic g with rational coefficients and separated critical data."""
    rng = np.random.default_rng(seed)
    while True:
        us = sorted(rng.integers(-8, 9, size=3) / 4.0)
        if min(us[1] - us[0], us[2] - us[1]) >= 0.75:
            break
    x = BivarPoly.x()
    gp = BivarPoly.const(1)
    for u in us:
        gp = gp * (x - BivarPoly.const(Fraction(u).limit_denominator(8)))
    g = BivarPoly({(i + 1, 0): c * QQi(Fraction(1, i + 1))
                   for (i, j), c in gp.coeffs.items()})
    f = BivarPoly.y(2) - g
    return f, g


def make_cubic(seed: int):
    """Random cubic g with nondegenerate critical points, distinct values."""
    rng = np.random.default_rng(seed + 1000)
    while True:
        us = sorted(rng.integers(-6, 7, size=2) / 2.0)
        if us[1] - us[0] >= 1.0:
            break
    x = BivarPoly.x()
    gp = (x - BivarPoly.const(Fraction(us[0]))) * (x - BivarPoly.const(Fraction(us[1])))
    g = BivarPoly({(i + 1, 0): c * QQi(Fraction(1, i + 1))
                   for (i, j), c in gp.coeffs.items()})
    return BivarPoly.y(2) - g, g


@pytest.fixture(scope="session")
def reference_model():
    f = parse_poly("y^2 - x^3 + 3*x")
    return build_fibration(f, base=0.0)


@pytest.fixture(scope="session")
def omega_ydx():
    return PlanarOneForm(parse_poly("y"), BivarPoly.zero())


@pytest.fixture(scope="session")
def omega_exact():
    # d(x^2 y) = 2xy dx + x^2 dy
    return PlanarOneForm.d(parse_poly("x^2*y"))


@pytest.fixture(scope="session")
def quartic_models():
    models = []
    for seed in QUARTIC_SEEDS:
        f, g = make_quartic(seed)
        models.append(build_fibration(f))
    return models


def faca_agreement_trials(n=200, seed=20250810, box_radius=5):
    """Fast condition-(6) criterion vs literal box enumeration, n random forms."""
    from planefol.homology import (CycleClass, IntersectionForm,
                                   condition_faca, condition_faca_bruteforce)
    rng = np.random.default_rng(seed)
    for _ in range(n):
        mu = int(rng.integers(2, 7))
        raw = rng.integers(-3, 4, size=(mu, mu))
        m = np.triu(raw, 1)
        form = IntersectionForm(m - m.T)
        d1 = CycleClass.of(rng.integers(-3, 4, size=mu))
        d2 = CycleClass.of(rng.integers(-3, 4, size=mu))
        fast = condition_faca(d1, d2, form)
        brute = condition_faca_bruteforce(d1, d2, form, box_radius)
        if fast.holds != brute.holds:
            return False, (form.matrix.tolist(), d1.coords, d2.coords)
    return True, None


def random_one_form(rng, max_degree=2):
    """Random polynomial 1-form with small rational coefficients."""
    def rand_poly():
        p = BivarPoly.zero()
        for i in range(max_degree + 1):
            for j in range(max_degree + 1 - i):
                num = int(rng.integers(-4, 5))
                if num:
                    p = p + BivarPoly.monomial(Fraction(num, 2), i, j)
        return p
    while True:
        w = PlanarOneForm(rand_poly(), rand_poly())
        if not (w.A.is_zero() and w.B.is_zero()):
            return w
