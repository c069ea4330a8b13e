"""Exact bivariate polynomial arithmetic, 1-forms, critical loci, tameness.

Coefficients are exact Gaussian rationals (pairs of ``Fraction``); floats only
appear when a polynomial is *evaluated*.  The text grammar accepts terms like
``3*x^2*y``, ``-0.5x``, ``(1+2i)*y^3`` joined by ``+``/``-``.
"""
from __future__ import annotations

import re as _re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import NonIsolatedCriticalLocus, PlanefolError
from .rootfind import aberth_roots, cluster_roots, sort_key, sorted_roots
from .settings import DEFAULTS, Numerics

NEG_INF = float("-inf")


class QQi:
    """Gaussian rational: exact rational real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = re if isinstance(re, Fraction) else Fraction(re)
        self.im = im if isinstance(im, Fraction) else Fraction(im)

    @classmethod
    def of(cls, z) -> "QQi":
        if isinstance(z, QQi):
            return z
        if isinstance(z, complex):
            return cls(Fraction(z.real), Fraction(z.imag))
        return cls(Fraction(z), Fraction(0))

    def __add__(self, o):
        o = QQi.of(o)
        return QQi(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return QQi(-self.re, -self.im)

    def __sub__(self, o):
        return self + (-QQi.of(o))

    def __rsub__(self, o):
        return QQi.of(o) + (-self)

    def __mul__(self, o):
        o = QQi.of(o)
        return QQi(self.re * o.re - self.im * o.im,
                   self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, o):
        o = QQi.of(o)
        d = o.re * o.re + o.im * o.im
        if d == 0:
            raise ZeroDivisionError("division by zero in QQi")
        return QQi((self.re * o.re + self.im * o.im) / d,
                   (self.im * o.re - self.re * o.im) / d)

    def __eq__(self, o):
        o = QQi.of(o)
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return self.re != 0 or self.im != 0

    def conj(self) -> "QQi":
        return QQi(self.re, -self.im)

    def to_complex(self) -> complex:
        return complex(self.re) + 1j * complex(self.im)

    def __repr__(self):
        return f"QQi({self.re!r}, {self.im!r})"


def _fraction_from_decimal(tok: str) -> Fraction:
    return Fraction(tok)


class BivarPoly:
    """Sparse bivariate polynomial over the Gaussian rationals.

    ``coeffs`` maps exponent pairs (i, j) for x^i y^j to nonzero QQi values.
    """

    __slots__ = ("coeffs", "_dense", "_dx", "_dy", "_rows")

    def __init__(self, coeffs=None):
        self.coeffs = {}
        if coeffs:
            for (i, j), c in coeffs.items():
                c = QQi.of(c)
                if c:
                    self.coeffs[(int(i), int(j))] = c
        self._dense = None
        self._dx = None
        self._dy = None
        self._rows = None

    # -- constructors -------------------------------------------------------
    @classmethod
    def zero(cls) -> "BivarPoly":
        return cls()

    @classmethod
    def const(cls, c) -> "BivarPoly":
        return cls({(0, 0): QQi.of(c)})

    @classmethod
    def x(cls, k: int = 1) -> "BivarPoly":
        return cls({(k, 0): QQi(1)})

    @classmethod
    def y(cls, k: int = 1) -> "BivarPoly":
        return cls({(0, k): QQi(1)})

    @classmethod
    def monomial(cls, c, i: int, j: int) -> "BivarPoly":
        return cls({(i, j): QQi.of(c)})

    @classmethod
    def from_x_coeffs(cls, coeffs) -> "BivarPoly":
        """Univariate polynomial in x from an ascending coefficient list."""
        return cls({(i, 0): QQi.of(c) for i, c in enumerate(coeffs)})

    # -- basic structure ----------------------------------------------------
    @property
    def degree(self):
        """Total degree; the zero polynomial reports -inf."""
        if not self.coeffs:
            return NEG_INF
        return max(i + j for (i, j) in self.coeffs)

    def deg_x(self):
        return max((i for (i, j) in self.coeffs), default=NEG_INF)

    def deg_y(self):
        return max((j for (i, j) in self.coeffs), default=NEG_INF)

    def is_zero(self) -> bool:
        return not self.coeffs

    def is_constant(self) -> bool:
        return all(k == (0, 0) for k in self.coeffs)

    def __eq__(self, o):
        return isinstance(o, BivarPoly) and self.coeffs == o.coeffs

    def __hash__(self):
        return hash(frozenset(self.coeffs.items()))

    # -- arithmetic ----------------------------------------------------------
    def __add__(self, o):
        if not isinstance(o, BivarPoly):
            o = BivarPoly.const(o)
        out = dict(self.coeffs)
        for k, c in o.coeffs.items():
            s = out.get(k, QQi(0)) + c
            if s:
                out[k] = s
            else:
                out.pop(k, None)
        return BivarPoly(out)

    __radd__ = __add__

    def __neg__(self):
        return BivarPoly({k: -c for k, c in self.coeffs.items()})

    def __sub__(self, o):
        if not isinstance(o, BivarPoly):
            o = BivarPoly.const(o)
        return self + (-o)

    def __rsub__(self, o):
        return BivarPoly.const(o) + (-self)

    def __mul__(self, o):
        if not isinstance(o, BivarPoly):
            o = BivarPoly.const(o)
        out = {}
        for (i1, j1), c1 in self.coeffs.items():
            for (i2, j2), c2 in o.coeffs.items():
                k = (i1 + i2, j1 + j2)
                s = out.get(k, QQi(0)) + c1 * c2
                if s:
                    out[k] = s
                else:
                    out.pop(k, None)
        return BivarPoly(out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative power")
        result = BivarPoly.const(1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def scale(self, c) -> "BivarPoly":
        c = QQi.of(c)
        return BivarPoly({k: v * c for k, v in self.coeffs.items()})

    # -- calculus ------------------------------------------------------------
    def dx(self) -> "BivarPoly":
        if self._dx is None:
            self._dx = BivarPoly({(i - 1, j): c * i
                                  for (i, j), c in self.coeffs.items() if i > 0})
        return self._dx

    def dy(self) -> "BivarPoly":
        if self._dy is None:
            self._dy = BivarPoly({(i, j - 1): c * j
                                  for (i, j), c in self.coeffs.items() if j > 0})
        return self._dy

    # -- evaluation ----------------------------------------------------------
    def dense(self) -> np.ndarray:
        """Dense complex coefficient matrix c[i, j] for x^i y^j."""
        if self._dense is None:
            if not self.coeffs:
                self._dense = np.zeros((1, 1), dtype=complex)
            else:
                nx = max(i for (i, j) in self.coeffs) + 1
                ny = max(j for (i, j) in self.coeffs) + 1
                m = np.zeros((nx, ny), dtype=complex)
                for (i, j), c in self.coeffs.items():
                    m[i, j] = c.to_complex()
                self._dense = m
        return self._dense

    def __call__(self, x, y):
        return self.evaluate(x, y)

    def evaluate(self, x: complex, y: complex) -> complex:
        """Horner evaluation (via the dense table: Horner in y, then x)."""
        return complex(np.polynomial.polynomial.polyval2d(x, y, self.dense()))

    def eval_grid(self, X, Y) -> np.ndarray:
        return np.polynomial.polynomial.polyval2d(
            np.asarray(X, dtype=complex), np.asarray(Y, dtype=complex), self.dense())

    def scalar_eval(self, x: complex, y: complex) -> complex:
        """Pure-Python Horner for scalar points (hot loops avoid numpy dispatch)."""
        if self._rows is None:
            d = self.dense()
            self._rows = tuple(tuple(row) for row in d)
        acc = 0j
        for row in reversed(self._rows):
            ry = 0j
            for c in reversed(row):
                ry = ry * y + c
            acc = acc * x + ry
        return acc

    def x_coeffs(self) -> np.ndarray:
        """Ascending complex coefficients, for polynomials univariate in x."""
        if self.deg_y() not in (NEG_INF, 0):
            raise ValueError("polynomial is not univariate in x")
        n = 0 if self.is_zero() else int(self.deg_x()) + 1
        out = np.zeros(max(n, 1), dtype=complex)
        for (i, j), c in self.coeffs.items():
            out[i] = c.to_complex()
        return out

    def top_form(self) -> "BivarPoly":
        """Homogeneous part of maximal total degree."""
        d = self.degree
        if d == NEG_INF:
            return BivarPoly.zero()
        return BivarPoly({k: c for k, c in self.coeffs.items() if k[0] + k[1] == d})

    # -- printing / parsing ---------------------------------------------------
    def __str__(self):
        if not self.coeffs:
            return "0"
        keys = sorted(self.coeffs, key=lambda k: (-(k[0] + k[1]), -k[0]))
        parts = []
        for n, k in enumerate(keys):
            c = self.coeffs[k]
            s = _format_term(c, k, lead=(n == 0))
            parts.append(s)
        return "".join(parts)

    def __repr__(self):
        return f"BivarPoly({self})"

    @classmethod
    def parse(cls, text: str) -> "BivarPoly":
        return parse_poly(text)

    def to_sympy(self):
        import sympy as sp
        x, y = sp.symbols("x y")
        expr = sp.Integer(0)
        for (i, j), c in self.coeffs.items():
            expr += (sp.Rational(c.re) + sp.Rational(c.im) * sp.I) * x**i * y**j
        return expr


def _format_rational(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _format_term(c: QQi, key, lead: bool) -> str:
    i, j = key
    mono = []
    if i == 1:
        mono.append("x")
    elif i > 1:
        mono.append(f"x^{i}")
    if j == 1:
        mono.append("y")
    elif j > 1:
        mono.append(f"y^{j}")
    mono_s = "*".join(mono)

    if c.im == 0:
        q = c.re
        sign = "-" if q < 0 else "+"
        mag = abs(q)
        coef = _format_rational(mag)
        if mono_s and mag == 1:
            body = mono_s
        elif mono_s:
            body = f"{coef}*{mono_s}"
        else:
            body = coef
    elif c.re == 0:
        q = c.im
        sign = "-" if q < 0 else "+"
        mag = abs(q)
        ip = "i" if mag == 1 else f"{_format_rational(mag)}i"
        body = f"{ip}*{mono_s}" if mono_s else ip
    else:
        sign = "+"
        re_s = _format_rational(c.re)
        im_s = _format_rational(abs(c.im))
        op = "+" if c.im > 0 else "-"
        inner = f"({re_s}{op}{im_s}i)"
        body = f"{inner}*{mono_s}" if mono_s else inner

    if lead:
        return body if sign == "+" else f"-{body}"
    return f" {sign} {body}"


_TOKEN_RE = _re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?(?:/\d+)?)"
    r"|(?P<imag>[iI])(?![a-zA-Z])"
    r"|(?P<var>[xy])"
    r"|(?P<pow>\^|\*\*)"
    r"|(?P<mul>\*)"
    r"|(?P<sign>[+-])"
    r"|(?P<lpar>\()"
    r"|(?P<rpar>\)))")


def parse_poly(text: str) -> BivarPoly:
    """Parse the polynomial text grammar into a BivarPoly.

    Terms are products of decimal/rational numbers, ``i``, parenthesized
    complex literals ``(a+bi)``, and ``x``/``y`` with ``^k`` powers; ``*`` is
    optional between factors.
    """
    tokens = []
    pos = 0
    s = text.strip()
    while pos < len(s):
        m = _TOKEN_RE.match(s, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot tokenize polynomial at: {s[pos:pos+12]!r}")
        pos = m.end()
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))

    poly = BivarPoly.zero()
    k = 0
    n = len(tokens)
    if n == 0:
        raise ValueError("empty polynomial text")

    def parse_complex_literal(k):
        # after '(' : [sign] num [i] [sign num [i]] ')'
        val = QQi(0)
        seen = False
        sign = Fraction(1)
        while k < n and tokens[k][0] != "rpar":
            kind, tok = tokens[k]
            if kind == "sign":
                sign = Fraction(-1) if tok == "-" else Fraction(1)
                k += 1
                continue
            if kind == "num":
                q = sign * _fraction_from_decimal(tok)
                k += 1
                if k < n and tokens[k][0] == "imag":
                    val = val + QQi(0, q)
                    k += 1
                else:
                    val = val + QQi(q, 0)
                sign = Fraction(1)
                seen = True
                continue
            if kind == "imag":
                val = val + QQi(0, sign)
                sign = Fraction(1)
                k += 1
                seen = True
                continue
            raise ValueError(f"unexpected token {tok!r} in complex literal")
        if k >= n or not seen:
            raise ValueError("unterminated complex literal")
        return val, k + 1

    while k < n:
        sign = QQi(1)
        while k < n and tokens[k][0] == "sign":
            if tokens[k][1] == "-":
                sign = -sign
            k += 1
        if k >= n:
            raise ValueError("dangling sign in polynomial text")
        coef = sign
        ix = jy = 0
        factors = 0
        while k < n:
            kind, tok = tokens[k]
            if kind == "sign":
                break
            if kind == "mul":
                k += 1
                continue
            if kind == "num":
                coef = coef * QQi(_fraction_from_decimal(tok), 0)
                k += 1
                if k < n and tokens[k][0] == "imag":
                    coef = coef * QQi(0, 1)
                    k += 1
            elif kind == "imag":
                coef = coef * QQi(0, 1)
                k += 1
            elif kind == "lpar":
                lit, k = parse_complex_literal(k + 1)
                coef = coef * lit
            elif kind == "var":
                k += 1
                p = 1
                if k < n and tokens[k][0] == "pow":
                    k += 1
                    if k >= n or tokens[k][0] != "num":
                        raise ValueError("exponent must be an integer")
                    frac = _fraction_from_decimal(tokens[k][1])
                    if frac.denominator != 1 or frac < 0:
                        raise ValueError("exponent must be a nonnegative integer")
                    p = int(frac)
                    k += 1
                if tok == "x":
                    ix += p
                else:
                    jy += p
            elif kind == "rpar":
                raise ValueError("unbalanced ')'")
            else:  # pragma: no cover
                raise ValueError(f"unexpected token {tok!r}")
            factors += 1
        if factors == 0:
            raise ValueError("empty term in polynomial text")
        poly = poly + BivarPoly.monomial(coef, ix, jy)
    return poly


# ---------------------------------------------------------------------------
# 1-forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlanarOneForm:
    """Polynomial 1-form  A dx + B dy in the plane."""

    A: BivarPoly
    B: BivarPoly

    @property
    def degree(self):
        return max(self.A.degree, self.B.degree)

    @classmethod
    def parse(cls, a_text: str, b_text: str) -> "PlanarOneForm":
        return cls(parse_poly(a_text), parse_poly(b_text))

    @classmethod
    def d(cls, p: BivarPoly) -> "PlanarOneForm":
        """Exterior derivative of a function: dP = P_x dx + P_y dy."""
        return cls(p.dx(), p.dy())

    def exterior_derivative_density(self) -> BivarPoly:
        """Density of d(omega) against dx ^ dy:  B_x - A_y."""
        return self.B.dx() - self.A.dy()

    def pair(self, x, y, vx, vy):
        """Apply the form at a point to a tangent vector."""
        return self.A.evaluate(x, y) * vx + self.B.evaluate(x, y) * vy

    def __str__(self):
        return f"({self.A}) dx + ({self.B}) dy"


def evaluate(p: BivarPoly, x: complex, y: complex) -> complex:
    return p.evaluate(x, y)


def gradient(f: BivarPoly, x: complex, y: complex):
    return f.dx().evaluate(x, y), f.dy().evaluate(x, y)


def exterior_derivative_density(omega: PlanarOneForm) -> BivarPoly:
    return omega.exterior_derivative_density()


# ---------------------------------------------------------------------------
# critical locus
# ---------------------------------------------------------------------------

@dataclass
class CriticalSet:
    """Isolated critical points of f, sorted by critical value (Re, Im)."""

    points: list          # [(x, y)] complex pairs
    values: list          # [f(p)]
    hessians: list        # [det Hess f(p)]
    mu: int
    degenerate: bool      # any multiplicity cluster encountered

    def min_value_separation(self) -> float:
        vals = self.values
        if len(vals) < 2:
            return float("inf")
        return min(abs(vals[a] - vals[b])
                   for a in range(len(vals)) for b in range(a + 1, len(vals)))


def _newton2d(f: BivarPoly, x0: complex, y0: complex, tol: float, iters: int = 40):
    fx, fy = f.dx(), f.dy()
    fxx, fxy, fyy = fx.dx(), fx.dy(), fy.dy()
    x, y = x0, y0
    for _ in range(iters):
        gx = fx.evaluate(x, y)
        gy = fy.evaluate(x, y)
        r = max(abs(gx), abs(gy))
        if r <= tol:
            return x, y, r
        a = fxx.evaluate(x, y)
        b = fxy.evaluate(x, y)
        d = fyy.evaluate(x, y)
        det = a * d - b * b
        if abs(det) < 1e-250:
            break
        dx_step = (d * gx - b * gy) / det
        dy_step = (a * gy - b * gx) / det
        x, y = x - dx_step, y - dy_step
    gx = fx.evaluate(x, y)
    gy = fy.evaluate(x, y)
    return x, y, max(abs(gx), abs(gy))


def critical_set(f: BivarPoly, params: Numerics = DEFAULTS) -> CriticalSet:
    """All isolated critical points of f with values and Hessian determinants.

    Elimination to one variable by resultant, simultaneous root extraction,
    then two-variable Newton polishing to residual <= params.newton_residual.
    """
    if f.is_constant():
        raise ValueError("critical_set requires a nonconstant polynomial")
    fx, fy = f.dx(), f.dy()

    if fx.is_zero() or fy.is_zero():
        # f depends on one variable only (up to constants).
        g = fy if fx.is_zero() else fx
        if g.is_constant():
            return CriticalSet([], [], [], 0, False)
        # f_x == 0 and f_y a nonconstant poly in y alone gives isolated
        # critical lines only when the other derivative cuts them; with one
        # derivative identically zero the locus is positive-dimensional.
        raise NonIsolatedCriticalLocus("one partial derivative is identically zero")

    import sympy as sp
    x, y = sp.symbols("x y")
    sfx = sp.Poly(fx.to_sympy(), x, y)
    sfy = sp.Poly(fy.to_sympy(), x, y)
    g = sp.gcd(sfx, sfy)
    if sp.Poly(g, x, y).total_degree() > 0:
        raise NonIsolatedCriticalLocus("gcd(f_x, f_y) is nonconstant")

    candidates = []
    res_x = sp.resultant(sfx.as_expr(), sfy.as_expr(), y)
    rp = sp.Poly(res_x, x)
    if rp.is_zero:
        raise NonIsolatedCriticalLocus("resultant in x vanishes identically")
    xcoeffs = np.array([complex(c) for c in rp.all_coeffs()][::-1], dtype=complex)
    xroots = aberth_roots(xcoeffs) if len(xcoeffs) > 1 else np.zeros(0, complex)
    xreps, _, _ = cluster_roots(xroots, params.cluster_radius)

    for x0 in xreps:
        # y-candidates along x = x0 from whichever partial has y-content.
        got = np.zeros(0, dtype=complex)
        for part in (fy, fx):
            cy = [QQi(0)] * (max(int(part.deg_y()), 0) + 1)
            for (i, j), c in part.coeffs.items():
                cy[j] = cy[j] + c * QQi.of(x0 ** i)
            arr = np.array([q.to_complex() for q in cy], dtype=complex)
            if np.max(np.abs(arr[1:])) if len(arr) > 1 else 0:
                got = aberth_roots(arr)
                break
        if len(got) == 0:
            got = np.array([0j])
        for y0 in got:
            candidates.append((complex(x0), complex(y0)))

    fxx, fxy, fyy = fx.dx(), fx.dy(), fy.dy()
    accepted = []
    for (x0, y0) in candidates:
        xr, yr, resid = _newton2d(f, x0, y0, params.newton_residual)
        if resid <= 1e-6:
            # residual above newton_residual means a stalled (degenerate)
            # point; kept here, flagged below
            accepted.append((xr, yr))
    if not accepted:
        return CriticalSet([], [], [], 0, False)

    # dedupe in C^2
    reps = []
    degenerate = False
    for p in sorted(accepted, key=lambda p: (sort_key(p[0]), sort_key(p[1]))):
        dup = False
        for q in reps:
            if abs(p[0] - q[0]) <= params.cluster_radius and \
               abs(p[1] - q[1]) <= params.cluster_radius:
                dup = True
                break
        if not dup:
            reps.append(p)

    pts, vals, hess = [], [], []
    for (x0, y0) in reps:
        resid = max(abs(fx.evaluate(x0, y0)), abs(fy.evaluate(x0, y0)))
        if resid > 1e-6:
            continue
        if resid > params.newton_residual:
            degenerate = True
        pts.append((x0, y0))
        vals.append(f.evaluate(x0, y0))
        a = fxx.evaluate(x0, y0)
        b = fxy.evaluate(x0, y0)
        d = fyy.evaluate(x0, y0)
        hess.append(a * d - b * b)

    order = sorted(range(len(pts)), key=lambda k: sort_key(vals[k]))
    pts = [pts[k] for k in order]
    vals = [vals[k] for k in order]
    hess = [hess[k] for k in order]
    return CriticalSet(pts, vals, hess, len(pts), degenerate)


# ---------------------------------------------------------------------------
# tameness report
# ---------------------------------------------------------------------------

@dataclass
class TamenessReport:
    hessians_nonzero: bool
    values_distinct: bool
    top_form_distinct_roots: bool
    verdict: bool
    witnesses: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    critical: CriticalSet | None = None


def is_hyperelliptic(f: BivarPoly):
    """If f = y^2 - g(x), return g as a BivarPoly in x; else None."""
    g = {}
    for (i, j), c in f.coeffs.items():
        if (i, j) == (0, 2):
            if c != QQi(1):
                return None
        elif j == 0:
            g[(i, 0)] = -c
        else:
            return None
    if (0, 2) not in f.coeffs:
        return None
    return BivarPoly(g)


def tameness_report(f: BivarPoly, params: Numerics = DEFAULTS) -> TamenessReport:
    """Genericity diagnostics: nondegenerate critical points, distinct values,
    squarefree top form; plus informational notes for the standing hypotheses."""
    crit = critical_set(f, params)
    witnesses = {}

    bad_h = [k for k, h in enumerate(crit.hessians) if abs(h) <= params.hessian_tol]
    hess_ok = not bad_h and not crit.degenerate
    if bad_h:
        witnesses["degenerate_points"] = [crit.points[k] for k in bad_h]

    vals_ok = True
    pairs = []
    for a in range(len(crit.values)):
        for b in range(a + 1, len(crit.values)):
            if abs(crit.values[a] - crit.values[b]) <= params.value_separation:
                pairs.append((crit.values[a], crit.values[b]))
    if pairs:
        vals_ok = False
        witnesses["coincident_values"] = pairs

    top_ok, top_witness = _top_form_distinct(f)
    if not top_ok:
        witnesses["top_form"] = top_witness

    notes = [
        "ambient space is the affine plane: H_1 = 0 and connectedness at "
        "infinity are standing assumptions, not computed checks",
        "degree surrogate in use: deg(omega) as max(deg A, deg B) stands in "
        "for pole order along the divisor at infinity",
    ]
    if f.degree != NEG_INF and f.degree < 3:
        notes.append("deg(f) < 3: outside the generic setting, results are "
                     "desk-scale only")
    g = is_hyperelliptic(f)
    if g is not None and g.degree != NEG_INF and g.degree >= 3:
        notes.append(
            "at-infinity genericity violated for y^2 - g(x); working "
            "hypotheses (connected Dynkin diagram, generating vanishing "
            "cycles) still hold for this family")

    verdict = hess_ok and vals_ok and top_ok
    return TamenessReport(hess_ok, vals_ok, top_ok, verdict, witnesses, notes, crit)


def _top_form_distinct(f: BivarPoly):
    """Squarefreeness of the top homogeneous form as a binary form."""
    import sympy as sp
    top = f.top_form()
    d = top.degree
    if d == NEG_INF:
        return False, "zero polynomial"
    if d == 0:
        return True, None
    x = sp.symbols("x")
    expr = sp.Integer(0)
    # dehomogenize at y = 1
    for (i, j), c in top.coeffs.items():
        expr += (sp.Rational(c.re) + sp.Rational(c.im) * sp.I) * x**i
    p = sp.Poly(expr, x)
    deg_aff = 0 if p.is_zero else p.degree()
    mult_infinity = int(d) - deg_aff
    if mult_infinity > 1:
        return False, f"root at infinity with multiplicity {mult_infinity}"
    if p.is_zero or p.degree() == 0:
        return True, None
    gg = sp.gcd(p, p.diff(x))
    if sp.Poly(gg, x).degree() > 0:
        rep = sp.nroots(sp.Poly(gg, x), n=15)
        return False, f"repeated projective root near {complex(rep[0]):.6g}"
    return True, None


# ---------------------------------------------------------------------------
# exact linear algebra and relative exactness
# ---------------------------------------------------------------------------

def solve_exact(rows, rhs):
    """Solve an exact linear system over QQi (free variables set to zero).

    Returns the solution list or None if inconsistent.
    """
    m = len(rows)
    ncols = len(rows[0]) if m else 0
    aug = [list(r) + [rhs[k]] for k, r in enumerate(rows)]
    piv_cols = []
    row = 0
    for col in range(ncols):
        piv = None
        for r in range(row, m):
            if aug[r][col]:
                piv = r
                break
        if piv is None:
            continue
        aug[row], aug[piv] = aug[piv], aug[row]
        inv = QQi(1) / aug[row][col]
        aug[row] = [v * inv for v in aug[row]]
        for r in range(m):
            if r != row and aug[r][col]:
                factor = aug[r][col]
                aug[r] = [a - factor * b for a, b in zip(aug[r], aug[row])]
        piv_cols.append(col)
        row += 1
        if row == m:
            break
    for r in range(row, m):
        if aug[r][ncols]:
            return None
    sol = [QQi(0)] * ncols
    for r, col in enumerate(piv_cols):
        sol[col] = aug[r][ncols]
    return sol


def _monomials_upto(deg: int):
    out = []
    for total in range(deg + 1):
        for i in range(total + 1):
            out.append((i, total - i))
    return out


@dataclass
class ExactnessResult:
    """Outcome of the relative-exactness solve omega = Q df + dP."""

    found: bool
    P: BivarPoly | None
    Q: BivarPoly | None
    certified: bool
    residual: float
    bounds: tuple
    bounds_hint: bool = False

    @property
    def witness(self):
        return (self.P, self.Q) if self.found else None


def relative_exactness(omega: PlanarOneForm, f: BivarPoly,
                       bounds: tuple | None = None,
                       params: Numerics = DEFAULTS,
                       _probe_larger: bool = True) -> ExactnessResult:
    """Search for P, Q with omega = Q df + dP within total-degree bounds.

    Default bounds: deg P <= deg(omega) + 1, deg Q <= max(0, deg(omega) -
    deg(f) + 1).  The solve is exact over the Gaussian rationals, so a
    returned witness is certified; absence means no witness *within bounds*.
    """
    deg_w = omega.degree
    if deg_w == NEG_INF:
        return ExactnessResult(True, BivarPoly.zero(), BivarPoly.zero(),
                               True, 0.0, (0, 0))
    deg_f = f.degree
    if bounds is None:
        bp = int(deg_w) + 1
        bq = max(0, int(deg_w) - int(deg_f) + 1)
    else:
        bp, bq = int(bounds[0]), int(bounds[1])

    result = _solve_exactness(omega, f, bp, bq)
    if result is not None:
        P, Q = result
        return ExactnessResult(True, P, Q, True, 0.0, (bp, bq))

    hint = False
    if _probe_larger:
        # Heuristic-only signal: compare least-squares residuals at the given
        # bounds and at bounds+1; a drop suggests the bounds are too small.
        r0 = _lstsq_residual(omega, f, bp, bq)
        r1 = _lstsq_residual(omega, f, bp + 1, bq + 1)
        if r1 < 0.5 * r0 and r0 > 1e-12:
            hint = True
    return ExactnessResult(False, None, None, True, float("nan"),
                           (bp, bq), bounds_hint=hint)


def _exactness_system(omega: PlanarOneForm, f: BivarPoly, bp: int, bq: int):
    p_mons = _monomials_upto(bp)
    q_mons = _monomials_upto(bq)
    fx, fy = f.dx(), f.dy()
    # Unknown order: P coefficients then Q coefficients, monomials in the
    # fixed (total, i) order; "first witness" is deterministic through this.
    cols = []
    for (i, j) in p_mons:
        da = BivarPoly({(i - 1, j): QQi(i)}) if i > 0 else BivarPoly.zero()
        db = BivarPoly({(i, j - 1): QQi(j)}) if j > 0 else BivarPoly.zero()
        cols.append((da, db))
    for (i, j) in q_mons:
        m = BivarPoly.monomial(1, i, j)
        cols.append((m * fx, m * fy))
    keys = set(omega.A.coeffs) | set(omega.B.coeffs)
    for (da, db) in cols:
        keys |= set(da.coeffs) | set(db.coeffs)
    keys = sorted(keys)
    rows, rhs = [], []
    for which in (0, 1):
        target = omega.A if which == 0 else omega.B
        for key in keys:
            rows.append([ (cda, cdb)[which].coeffs.get(key, QQi(0))
                          for (cda, cdb) in cols ])
            rhs.append(target.coeffs.get(key, QQi(0)))
    return p_mons, q_mons, rows, rhs


def _solve_exactness(omega, f, bp, bq):
    p_mons, q_mons, rows, rhs = _exactness_system(omega, f, bp, bq)
    sol = solve_exact(rows, rhs)
    if sol is None:
        return None
    P = BivarPoly({k: sol[a] for a, k in enumerate(p_mons)})
    Q = BivarPoly({k: sol[len(p_mons) + a] for a, k in enumerate(q_mons)})
    return P, Q


def _lstsq_residual(omega, f, bp, bq) -> float:
    p_mons, q_mons, rows, rhs = _exactness_system(omega, f, bp, bq)
    A = np.array([[c.to_complex() for c in r] for r in rows], dtype=complex)
    b = np.array([c.to_complex() for c in rhs], dtype=complex)
    if A.size == 0:
        return float(np.linalg.norm(b))
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    return float(np.linalg.norm(A @ sol - b))


def residual_of_witness(omega: PlanarOneForm, f: BivarPoly,
                        P: BivarPoly, Q: BivarPoly) -> float:
    """Coefficientwise residual of omega - Q df - dP (exact arithmetic)."""
    ra = omega.A - Q * f.dx() - P.dx()
    rb = omega.B - Q * f.dy() - P.dy()
    worst = 0.0
    for poly in (ra, rb):
        for c in poly.coeffs.values():
            worst = max(worst, abs(c.to_complex()))
    return worst
