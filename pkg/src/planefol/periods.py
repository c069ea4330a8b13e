"""Abelian integrals over realized cycles and their analytic continuation.

The integration contour is always the sampled polyline with y re-lifted
exactly onto the fiber between samples, so period values carry no contour
discretization error: refinement only has to resolve the quadrature itself.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateRatio, IllConditionedPeriodMatrix, PlanefolError,
                     PoleOnPath, ToleranceNotMet)
from .fibration import CycleRealization, FiberLoop, FibrationModel, TPath, transport_cycle
from .polynomials import BivarPoly, PlanarOneForm
from .rootfind import polyval
from .settings import DEFAULTS, Numerics


# ---------------------------------------------------------------------------
# forms on fibers
# ---------------------------------------------------------------------------

class FiberForm:
    """Finite sum of terms c * x^i * y^j dx on the fiber y^2 = g(x) + t.

    Negative j is allowed (poles at the branch points y = 0 only); the
    t-dependence stays implicit through y.
    """

    __slots__ = ("terms", "g_coeffs", "_groups")

    def __init__(self, terms, g_coeffs):
        merged = {}
        for (i, j, c) in terms:
            key = (int(i), int(j))
            merged[key] = merged.get(key, 0j) + complex(c)
        self.terms = tuple(sorted((i, j, c) for (i, j), c in merged.items()
                                  if c != 0))
        self.g_coeffs = np.asarray(g_coeffs, dtype=complex)
        self._groups = None

    @property
    def pole_order(self) -> int:
        """Most negative y-exponent (0 for regular forms)."""
        return min((j for (_, j, _) in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def gm(self) -> "FiberForm":
        """Gelfand-Leray derivative: x^i y^j dx -> (j/2) x^i y^(j-2) dx."""
        return FiberForm([(i, j - 2, 0.5 * j * c) for (i, j, c) in self.terms
                          if j != 0], self.g_coeffs)

    def scaled(self, c) -> "FiberForm":
        return FiberForm([(i, j, c * v) for (i, j, v) in self.terms], self.g_coeffs)

    def plus(self, other: "FiberForm") -> "FiberForm":
        return FiberForm(self.terms + other.terms, self.g_coeffs)

    def _grouped(self):
        if self._groups is None:
            by_j = {}
            for (i, j, c) in self.terms:
                by_j.setdefault(j, {})[i] = c
            groups = []
            for j, coeffs in sorted(by_j.items()):
                arr = np.zeros(max(coeffs) + 1, dtype=complex)
                for i, c in coeffs.items():
                    arr[i] = c
                groups.append((j, arr))
            self._groups = groups
        return self._groups

    def eval(self, X, Y):
        """Value of the dx-coefficient at fiber points."""
        out = np.zeros(np.broadcast(X, Y).shape, dtype=complex)
        for j, arr in self._grouped():
            out = out + polyval(arr, X) * Y**j
        return out

    def __str__(self):
        if not self.terms:
            return "0 dx"
        bits = []
        for (i, j, c) in self.terms:
            mono = []
            if i:
                mono.append(f"x^{i}" if i != 1 else "x")
            if j:
                mono.append(f"y^{j}" if j != 1 else "y")
            m = "*".join(mono) if mono else "1"
            bits.append(f"({c:.6g})*{m}")
        return " + ".join(bits) + " dx"


def restrict_to_fiber(omega: PlanarOneForm, model: FibrationModel) -> FiberForm:
    """Pull A dx + B dy back to the fiber using dy = g'(x)/(2y) dx."""
    if model.backend != "hyperelliptic":
        raise PlanefolError("fiber restriction needs the hyperelliptic backend")
    gp = np.polynomial.polynomial.polyder(model.g_coeffs)
    terms = []
    for (i, j), c in omega.A.coeffs.items():
        terms.append((i, j, c.to_complex()))
    for (i, j), c in omega.B.coeffs.items():
        cc = 0.5 * c.to_complex()
        for k, gk in enumerate(gp):
            if gk != 0:
                terms.append((i + k, j - 1, cc * gk))
    return FiberForm(terms, model.g_coeffs)


def gm_derivative(phi: FiberForm, model: FibrationModel | None = None) -> FiberForm:
    return phi.gm()


# ---------------------------------------------------------------------------
# quadrature over sampled fiber loops
# ---------------------------------------------------------------------------

_GL_CACHE = {}


def _gl(n: int):
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (0.5 * (x + 1.0), 0.5 * w)   # mapped to [0, 1]
    return _GL_CACHE[n]


def _split_loop(loop: FiberLoop, g_coeffs) -> FiberLoop:
    return loop.resampled(2, g_coeffs)


def _nearest_sqrt(values: np.ndarray, guess: np.ndarray) -> np.ndarray:
    r = np.sqrt(values)
    flip = np.abs(r - guess) > np.abs(-r - guess)
    return np.where(flip, -r, r)


def _segment_nodes(loop: FiberLoop, order: int):
    """Per-segment GL nodes: X, exact Y, and dx weights, cached on the loop."""
    cache = getattr(loop, "_node_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(loop, "_node_cache", cache)
    if order in cache:
        return cache[order]
    xi, w = _gl(order)
    x0 = loop.xs[:-1][:, None]
    dx = (loop.xs[1:] - loop.xs[:-1])[:, None]
    y0 = loop.ys[:-1][:, None]
    dy = (loop.ys[1:] - loop.ys[:-1])[:, None]
    X = x0 + xi[None, :] * dx
    guess = y0 + xi[None, :] * dy
    gp = np.asarray(loop._g_for_nodes, dtype=complex) \
        if hasattr(loop, "_g_for_nodes") else None
    if gp is None:
        raise PlanefolError("loop has no attached fiber polynomial")
    Y = _nearest_sqrt(polyval(gp, X) + loop.t, guess)
    W = w[None, :] * dx
    cache[order] = (X, Y, W)
    return cache[order]


def _attach_g(loop: FiberLoop, g_coeffs):
    object.__setattr__(loop, "_g_for_nodes", np.asarray(g_coeffs, dtype=complex))
    return loop


def _integral_once(loop: FiberLoop, form: FiberForm, order: int) -> complex:
    X, Y, W = _segment_nodes(loop, order)
    return complex(np.sum(form.eval(X, Y) * W))


@dataclass
class PeriodValue:
    value: complex
    err: float
    meta: dict = field(default_factory=dict)


def _check_poles(loop: FiberLoop, form: FiberForm, params: Numerics):
    if form.pole_order < 0:
        clearance = float(np.min(np.abs(loop.ys)))
        if clearance < params.pole_clearance:
            raise PoleOnPath(
                f"loop passes within {clearance:.2e} of y = 0 but the form "
                f"has a pole there")


def period(real, form: FiberForm, tol: float | None = None,
           params: Numerics = DEFAULTS, meta: dict | None = None) -> PeriodValue:
    """Integrate a fiber form over a realized loop to the requested tolerance.

    Composite Gauss-Legendre per polyline segment; refinement first raises
    the order, then subdivides segments, and the error estimate is the
    difference of the last two refinements.
    """
    tol = params.period_tol if tol is None else tol
    loop = real.loop if isinstance(real, CycleRealization) else real
    _attach_g(loop, form.g_coeffs)
    _check_poles(loop, form, params)
    prev = _integral_once(loop, form, params.quad_order)
    value = _integral_once(loop, form, params.quad_order + 8)
    err = abs(value - prev)
    scale = max(1.0, abs(value))
    cur = loop
    splits = 0
    while err > tol * scale and splits < params.quad_max_splits:
        cur = _attach_g(_split_loop(cur, form.g_coeffs), form.g_coeffs)
        prev = value
        value = _integral_once(cur, form, params.quad_order + 8)
        err = abs(value - prev)
        splits += 1
    if err > tol * scale:
        raise ToleranceNotMet(
            f"period refinement stalled at error {err:.2e} (tol {tol:.1e})")
    m = dict(meta or {})
    m.setdefault("t", loop.t)
    return PeriodValue(value, err, m)


# ---------------------------------------------------------------------------
# iterated integrals
# ---------------------------------------------------------------------------

def _word_k2_once(loop: FiberLoop, f1: FiberForm, f2: FiberForm,
                  order: int) -> complex:
    """Length-2 iterated integral over one pass of the loop at a GL order."""
    xi, w = _gl(order)
    X, Y, W = _segment_nodes(loop, order)           # outer nodes, (S, n)
    F2 = f2.eval(X, Y)
    # inner nodes: v = u * xi_m on each segment, (S, n, n)
    x0 = loop.xs[:-1][:, None, None]
    dx = (loop.xs[1:] - loop.xs[:-1])[:, None, None]
    y0 = loop.ys[:-1][:, None, None]
    dy = (loop.ys[1:] - loop.ys[:-1])[:, None, None]
    U = xi[None, :, None] * xi[None, None, :]
    Xi = x0 + U * dx
    guess = y0 + U * dy
    g = np.asarray(loop._g_for_nodes, dtype=complex)
    Yi = _nearest_sqrt(polyval(g, Xi) + loop.t, guess)
    F1_inner = f1.eval(Xi, Yi)
    # A(u_l) = dx * u_l * sum_m w_m F1(u_l xi_m)
    inner = np.sum(w[None, None, :] * F1_inner, axis=2)
    A = dx[:, :, 0] * xi[None, :] * inner
    j12 = np.sum(W * F2 * A, axis=1)
    j11 = np.sum(W * f1.eval(X, Y), axis=1)
    j22 = np.sum(W * F2, axis=1)
    prefix = np.concatenate([[0.0 + 0j], np.cumsum(j11)[:-1]])
    return complex(np.sum(prefix * j22) + np.sum(j12))


def _word_general_once(loop: FiberLoop, forms, order: int) -> complex:
    """Iterated integral of arbitrary length by per-segment recursion."""
    xi, w = _gl(order)
    g = np.asarray(loop._g_for_nodes, dtype=complex)
    k = len(forms)
    V = np.zeros(k + 1, dtype=complex)
    V[0] = 1.0

    def subword(x0, dx, y0, dy, i, j, upper):
        # integral of forms[i..j] over the segment portion [0, upper]
        if i > j:
            return 1.0 + 0j
        v = upper * xi
        Xv = x0 + v * dx
        Yv = _nearest_sqrt(polyval(g, Xv) + loop.t, y0 + v * dy)
        tot = 0j
        for l in range(len(xi)):
            innerv = subword(x0, dx, y0, dy, i, j - 1, v[l])
            tot += w[l] * forms[j].eval(Xv[l], Yv[l]) * innerv
        return tot * upper * dx

    for s in range(loop.n_segments):
        x0 = loop.xs[s]
        dx = loop.xs[s + 1] - x0
        y0 = loop.ys[s]
        dy = loop.ys[s + 1] - y0
        J = {}
        for i in range(k):
            for j in range(i, k):
                J[(i, j)] = subword(x0, dx, y0, dy, i, j, 1.0)
        newV = V.copy()
        for m in range(1, k + 1):
            acc = 0j
            for j in range(m):
                acc += V[j] * J[(j, m - 1)]
            newV[m] = V[m] + acc
        V = newV
    return complex(V[k])


def iterated_integral(loop_or_real, forms, tol: float | None = None,
                      params: Numerics = DEFAULTS) -> complex:
    """Chen iterated integral of an ordered form list over a loop or word.

    Convention: the first form is integrated over the earliest part of the
    path, so concatenation satisfies
    int_{ab} n1 n2 = int_a n1 n2 + int_b n1 n2 + (int_a n1)(int_b n2).
    """
    tol = params.iterated_tol if tol is None else tol
    loop = loop_or_real.loop if isinstance(loop_or_real, CycleRealization) \
        else loop_or_real
    if not forms:
        return 1.0 + 0j
    g = forms[0].g_coeffs
    _attach_g(loop, g)
    for fm in forms:
        _check_poles(loop, fm, params)
    k = len(forms)
    order = params.quad_order

    def one(lp, n):
        _attach_g(lp, g)
        if k == 1:
            return _integral_once(lp, forms[0], n)
        if k == 2:
            return _word_k2_once(lp, forms[0], forms[1], n)
        return _word_general_once(lp, forms, n)

    prev = one(loop, order)
    value = one(loop, order + 8)
    err = abs(value - prev)
    scale = max(1.0, abs(value))
    cur = loop
    splits = 0
    while err > tol * scale and splits < params.quad_max_splits:
        cur = _split_loop(cur, g)
        prev = value
        value = one(cur, order + 8)
        err = abs(value - prev)
        splits += 1
    if err > tol * scale:
        raise ToleranceNotMet(
            f"iterated integral refinement stalled at error {err:.2e}")
    return value


# ---------------------------------------------------------------------------
# transported basis and continuation
# ---------------------------------------------------------------------------

def basis_realizations(model: FibrationModel):
    return [model.realize(i) for i in range(model.mu)]


def _transport_cache(model) -> dict:
    cache = getattr(model, "_transport_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(model, "_transport_cache", cache)
    return cache


def basis_at(model: FibrationModel, t: complex):
    """Basis realizations on the fiber over t (continued from the base)."""
    return [model.realize_at(i, complex(t)) for i in range(model.mu)]


def transported_basis_along(model: FibrationModel, loop: TPath):
    cache = _transport_cache(model)
    key = ("loop", tuple((type(l).__name__, str(l)) for l in loop.legs))
    if key not in cache:
        cache[key] = [transport_cycle(r, loop, model=model)
                      for r in basis_realizations(model)]
    return cache[key]


def class_period(model, coords, form: FiberForm, reals=None,
                 tol: float | None = None, params: Numerics = DEFAULTS) -> PeriodValue:
    """Period of an integer homology class via linearity over the basis."""
    reals = reals if reals is not None else basis_realizations(model)
    total = 0j
    err = 0.0
    for c, r in zip(coords, reals):
        if c == 0:
            continue
        pv = period(r, form, tol=tol, params=params)
        total += c * pv.value
        err += abs(c) * pv.err
    return PeriodValue(total, err, {"class": tuple(int(c) for c in coords)})


def continue_period(model: FibrationModel, coords, form: FiberForm,
                    loop: TPath, tol: float | None = None,
                    params: Numerics = DEFAULTS):
    """Period of a class before and after continuation around a closed t-loop."""
    if abs(loop.start - loop.end) > 1e-12 * max(1.0, abs(loop.start)):
        raise PlanefolError("continuation loop must be closed")
    before = class_period(model, coords, form, tol=tol, params=params)
    after_reals = transported_basis_along(model, loop)
    after = class_period(model, coords, form, reals=after_reals,
                         tol=tol, params=params)
    return before, after


def monodromy_loop(model: FibrationModel, i: int, radius: float | None = None,
                   orientation: int = +1) -> TPath:
    """Counterclockwise lollipop around the i-th critical value, based at b."""
    c = model.crit_value(i)
    others = [model.crit_value(k) for k in range(model.mu) if k != i]
    others.append(model.base)
    lim = min(abs(c - o) for o in others)
    r = radius if radius is not None else 0.3 * lim
    if r >= lim:
        raise PlanefolError("monodromy loop radius reaches another special point")
    return TPath.loop_around(model.base, c, r, orientation)


def default_form_basis(model: FibrationModel):
    """y dx and its Gauss-Manin derivatives, one form per basis cycle."""
    base = FiberForm([(0, 1, 1.0)], model.g_coeffs)
    forms = [base]
    for _ in range(model.mu - 1):
        forms.append(forms[-1].gm())
    return forms


def _monomial_form_basis(model: FibrationModel):
    return [FiberForm([(i, 1, 1.0)], model.g_coeffs) for i in range(model.mu)]


@dataclass
class MonodromyResult:
    matrix: np.ndarray          # complex, action on basis classes (columns)
    integer: np.ndarray
    deviation: float
    condition: float
    forms: list


def numeric_monodromy_matrix(model: FibrationModel, loop: TPath,
                             forms=None, tol: float | None = None,
                             params: Numerics = DEFAULTS) -> MonodromyResult:
    """Numeric homology action of continuation around a closed t-loop.

    Solves P_after = P_before @ M for the period matrices of a form basis,
    then rounds to integers.  Ill conditioning triggers the monomial
    fallback basis before failing.
    """
    candidates = [forms] if forms is not None else \
        [default_form_basis(model), _monomial_form_basis(model)]
    last_cond = None
    for fb in candidates:
        reals = basis_realizations(model)
        P = np.array([[period(r, fm, tol=tol, params=params).value
                       for r in reals] for fm in fb])
        cond = float(np.linalg.cond(P))
        last_cond = cond
        if cond > params.ill_condition_limit:
            continue
        after = transported_basis_along(model, loop)
        Q = np.array([[period(r, fm, tol=tol, params=params).value
                       for r in after] for fm in fb])
        M = np.linalg.solve(P, Q)
        MI = np.rint(M.real).astype(int)
        dev = float(np.max(np.abs(M - MI)))
        return MonodromyResult(M, MI, dev, cond, fb)
    raise IllConditionedPeriodMatrix(
        f"period matrix condition {last_cond:.3g} exceeds the limit for all "
        f"candidate form bases")


# ---------------------------------------------------------------------------
# ratio probe (single-valuedness mechanism)
# ---------------------------------------------------------------------------

@dataclass
class RatioProbeReport:
    base_ratio: complex
    defects: list               # per loop: |after/before - 1|
    single_valued: list         # per loop bool at tolerance
    flagged: list               # loops with a guarded (near-zero) denominator
    tol: float


def ratio_monodromy_probe(model: FibrationModel, coords, omega: PlanarOneForm,
                          loops, tol: float = 1e-9,
                          params: Numerics = DEFAULTS) -> RatioProbeReport:
    """Track P(t) = int_d1 omega' / int_d1 omega around t-loops.

    Reports the multiplicative defect per loop; a defect at tolerance means
    the ratio continued single-valuedly around that loop.
    """
    phi = restrict_to_fiber(omega, model)
    phi_p = phi.gm()
    denom = class_period(model, coords, phi, params=params)
    if abs(denom.value) < max(params.ratio_guard, 1e3 * denom.err):
        raise DegenerateRatio(
            f"base period {denom.value:.3e} vanishes at tolerance; the ratio "
            f"probe is not applicable")
    numer = class_period(model, coords, phi_p, params=params)
    base_ratio = numer.value / denom.value
    defects, flags, verdicts = [], [], []
    for lp in loops:
        after_reals = transported_basis_along(model, lp)
        d_after = class_period(model, coords, phi, reals=after_reals, params=params)
        n_after = class_period(model, coords, phi_p, reals=after_reals, params=params)
        if abs(d_after.value) < params.ratio_guard:
            defects.append(float("nan"))
            flags.append(True)
            verdicts.append(False)
            continue
        ratio_after = n_after.value / d_after.value
        defect = abs(ratio_after / base_ratio - 1.0)
        defects.append(defect)
        flags.append(False)
        verdicts.append(defect <= tol)
    return RatioProbeReport(base_ratio, defects, verdicts, flags, tol)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def period_table_csv(rows, path: str) -> None:
    """rows: iterable of (cycle, form, t, PeriodValue)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", "form", "t_re", "t_im", "value_re", "value_im", "err"])
        for cycle, form, t, pv in rows:
            w.writerow([cycle, form, f"{t.real:.17g}", f"{t.imag:.17g}",
                        f"{pv.value.real:.17g}", f"{pv.value.imag:.17g}",
                        f"{pv.err:.3e}"])
