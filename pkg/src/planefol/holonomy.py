"""Direct numeric holonomy of df + eps*omega along fiber loops.

The leaf over a sampled loop is followed in a section chart Z(sigma, t) =
Z0(sigma) + u * conj(grad f(Z0(sigma))) with f(Z) = t solved per step, which
has df(dZ/dt) = 1 exactly; the induced scalar ODE is

    t'(sigma) = -eps * omega(dZ/dsigma) / (1 + eps * omega(dZ/dt)).

The holonomy map itself is section-independent (asserted by the
reparametrization-invariance test), and h_0 is the identity by construction.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DenominatorSmall, IllConditionedFit, PlanefolError,
                     StepUnderflow)
from .fibration import FiberLoop, FibrationModel, loop_word
from .polynomials import BivarPoly, PlanarOneForm
from .settings import DEFAULTS, Numerics


# Dormand-Prince 5(4) tableau
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
          187 / 2100, 1 / 40)


class _LeafODE:
    """Per-segment leaf dynamics in the frozen-conjugate-gradient chart."""

    def __init__(self, f: BivarPoly, omega: PlanarOneForm, eps: complex,
                 guard: float, geom_cache: dict | None = None):
        self.eps = complex(eps)
        self.guard = guard
        fx, fy = f.dx(), f.dy()
        self.f = f.scalar_eval
        self.fx = fx.scalar_eval
        self.fy = fy.scalar_eval
        self.fxx = fx.dx().scalar_eval
        self.fxy = fx.dy().scalar_eval
        self.fyy = fy.dy().scalar_eval
        self.P = omega.A.scalar_eval
        self.Q = omega.B.scalar_eval
        self.seg = None
        self.seg_index = -1
        self.u_prev = 0j
        # chart geometry depends only on (segment, sigma); shared across
        # epsilon values and repeated transports of the same loop
        self.geom = geom_cache if geom_cache is not None else {}

    def set_segment(self, index, x0, y0, dx, dy):
        self.seg = (x0, y0, dx, dy)
        self.seg_index = index
        self.u_prev = 0j

    def _geometry(self, sigma: float):
        key = (self.seg_index, sigma)
        hit = self.geom.get(key)
        if hit is not None:
            return hit
        x0, y0, dx, dy = self.seg
        zx = x0 + sigma * dx
        zy = y0 + sigma * dy
        gx0 = self.fx(zx, zy)
        gy0 = self.fy(zx, zy)
        Gx, Gy = gx0.conjugate(), gy0.conjugate()
        hxx = self.fxx(zx, zy)
        hxy = self.fxy(zx, zy)
        hyy = self.fyy(zx, zy)
        Gpx = (hxx * dx + hxy * dy).conjugate()
        Gpy = (hxy * dx + hyy * dy).conjugate()
        out = (zx, zy, Gx, Gy, Gpx, Gpy)
        self.geom[key] = out
        return out

    def rhs(self, sigma: float, t: complex) -> complex:
        x0, y0, dx, dy = self.seg
        zx, zy, Gx, Gy, Gpx, Gpy = self._geometry(sigma)

        # solve f(Z0 + u*G) = t for u (Newton, warm-started)
        u = self.u_prev
        for _ in range(12):
            wx = zx + u * Gx
            wy = zy + u * Gy
            fv = self.f(wx, wy)
            gxZ = self.fx(wx, wy)
            gyZ = self.fy(wx, wy)
            dfG = gxZ * Gx + gyZ * Gy
            if dfG == 0:
                raise StepUnderflow("gradient degenerate along the leaf chart")
            du = (t - fv) / dfG
            u += du
            if abs(du) <= 1e-15 * (1.0 + abs(u)):
                break
        self.u_prev = u
        wx = zx + u * Gx
        wy = zy + u * Gy
        gxZ = self.fx(wx, wy)
        gyZ = self.fy(wx, wy)
        dfG = gxZ * Gx + gyZ * Gy
        # chart derivatives: df(dZ/dt) = 1 exactly, df(dZ/dsigma) = 0 exactly
        dtZx = Gx / dfG
        dtZy = Gy / dfG
        u_sig = -(gxZ * (dx + u * Gpx) + gyZ * (dy + u * Gpy)) / dfG
        dsZx = dx + u_sig * Gx + u * Gpx
        dsZy = dy + u_sig * Gy + u * Gpy
        Pv = self.P(wx, wy)
        Qv = self.Q(wx, wy)
        w_s = Pv * dsZx + Qv * dsZy
        w_t = Pv * dtZx + Qv * dtZy
        denom_term = self.eps * w_t
        if abs(denom_term) > self.guard:
            raise DenominatorSmall(
                f"|eps * omega(dZ/dt)| = {abs(denom_term):.3g} exceeds the "
                f"divergence guard {self.guard}")
        return -self.eps * w_s / (1.0 + denom_term)


def leaf_transport(f: BivarPoly, omega: PlanarOneForm, eps: complex,
                   loop: FiberLoop, t0: complex,
                   params: Numerics = DEFAULTS):
    """Holonomy sample: follow the leaf of df + eps*omega over the loop.

    Returns (t1, accumulated_error_estimate).  eps = 0 short-circuits to the
    identity.
    """
    if eps == 0:
        return complex(t0), 0.0
    lp = loop.loop if hasattr(loop, "loop") else loop
    if not lp.closed:
        raise PlanefolError("holonomy requires a closed loop")
    geom = getattr(lp, "_leaf_geom", None)
    if geom is None or geom.get("_f") is not f:
        geom = {"_f": f}
        object.__setattr__(lp, "_leaf_geom", geom)
    ode = _LeafODE(f, omega, eps, params.eps_guard, geom_cache=geom)
    t = complex(t0)
    err_acc = 0.0
    n_seg = lp.n_segments
    floor = 1e-6
    xs, ys = lp.xs, lp.ys
    # error budget distributed by arc length; noise floor keeps the
    # estimator from chasing roundoff
    seg_len = np.abs(np.diff(xs)) + np.abs(np.diff(ys))
    total_len = float(np.sum(seg_len)) or 1.0
    noise = 5e-16 * (1 + abs(t0))
    for k in range(n_seg):
        ode.set_segment(k, complex(xs[k]), complex(ys[k]),
                        complex(xs[k + 1] - xs[k]), complex(ys[k + 1] - ys[k]))
        seg_tol = max(params.ode_local_tol * seg_len[k] / total_len, noise)
        sigma = 0.0
        h = 1.0
        while sigma < 1.0 - 1e-14:
            h = min(h, 1.0 - sigma)
            ks = [ode.rhs(sigma, t)]
            for row_i in range(1, 7):
                acc = 0j
                for a, kv in zip(_DP_A[row_i], ks):
                    acc += a * kv
                ks.append(ode.rhs(sigma + _DP_C[row_i] * h, t + h * acc))
            t5 = t + h * sum(b * kv for b, kv in zip(_DP_B5, ks))
            t4 = t + h * sum(b * kv for b, kv in zip(_DP_B4, ks))
            err = abs(t5 - t4)
            tol_here = max(seg_tol * h, noise)
            if err <= tol_here or h <= floor:
                if h <= floor and err > tol_here:
                    raise StepUnderflow(
                        "holonomy step underflow (near-singular gradient on "
                        "the path)")
                sigma += h
                t = t5
                err_acc += err
                if err > 0:
                    h = min(1.0, 0.9 * h * (tol_here / err) ** 0.2)
                else:
                    h = 1.0
            else:
                h = max(floor, 0.9 * h * (tol_here / err) ** 0.2)
    return t, err_acc


# ---------------------------------------------------------------------------
# tasks, sample tables, fits
# ---------------------------------------------------------------------------

@dataclass
class HolonomyTask:
    """A batch of holonomy evaluations over one loop (or loop word)."""

    f: BivarPoly
    omega: PlanarOneForm
    loop: FiberLoop
    epsilons: tuple
    t0_grid: tuple
    params: Numerics = DEFAULTS

    def __post_init__(self):
        eps = [complex(e) for e in self.epsilons]
        if any(e == 0 for e in eps):
            raise ValueError("epsilon values must be nonzero")
        if len(set(eps)) != len(eps):
            raise ValueError("epsilon values must be distinct")
        self.epsilons = tuple(eps)
        self.t0_grid = tuple(complex(t) for t in self.t0_grid)


@dataclass
class HolonomyMapSamples:
    """Evaluated map samples (eps, t0) -> t1 with ODE error estimates."""

    entries: list = field(default_factory=list)   # (eps, t0, t1, err)

    def add(self, eps, t0, t1, err):
        self.entries.append((complex(eps), complex(t0), complex(t1), float(err)))

    def for_t0(self, t0):
        t0 = complex(t0)
        return [(e, t1, err) for (e, tt0, t1, err) in self.entries
                if abs(tt0 - t0) < 1e-13 * (1 + abs(t0))]

    def t0_values(self):
        seen = []
        for (_, t0, _, _) in self.entries:
            if not any(abs(t0 - s) < 1e-13 * (1 + abs(s)) for s in seen):
                seen.append(t0)
        return seen

    def to_csv(self, path: str):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps_re", "eps_im", "t0_re", "t0_im",
                        "t1_re", "t1_im", "err"])
            for (e, t0, t1, err) in self.entries:
                w.writerow([f"{e.real:.17g}", f"{e.imag:.17g}",
                            f"{t0.real:.17g}", f"{t0.imag:.17g}",
                            f"{t1.real:.17g}", f"{t1.imag:.17g}",
                            f"{err:.3e}"])


def run_task(task: HolonomyTask) -> HolonomyMapSamples:
    out = HolonomyMapSamples()
    for eps in task.epsilons:
        for t0 in task.t0_grid:
            t1, err = leaf_transport(task.f, task.omega, eps, task.loop, t0,
                                     task.params)
            out.add(eps, t0, t1, err)
    return out


def holonomy_word(model: FibrationModel, omega: PlanarOneForm, word,
                  epsilons=None, t0_grid=None,
                  params: Numerics | None = None) -> HolonomyMapSamples:
    """Holonomy samples along a word over the distinguished basis cycles.

    The word is read left to right as path concatenation; the holonomy of a
    concatenation is the composition of the letter holonomies in path order.
    """
    params = params or model.params
    epsilons = tuple(epsilons) if epsilons is not None else params.default_epsilons
    t0_grid = tuple(t0_grid) if t0_grid is not None else (model.base,)
    loop = loop_word(model, list(word))
    task = HolonomyTask(model.f, omega, loop, epsilons, t0_grid, params)
    return run_task(task)


@dataclass
class CoefficientFit:
    t0: complex
    m1: complex
    m2: complex | None
    m1_err: float
    m2_err: float
    richardson_spread: float
    residual: float


def melnikov_fit(samples: HolonomyMapSamples, order: int = 2,
                 params: Numerics = DEFAULTS):
    """Fit h_eps(t) - t to eps*M1 + eps^2*M2 (+ eps^3 slack), per t0.

    Needs at least order + 2 distinct epsilons spanning a decade; error bars
    come from the fit residual, and the Richardson column reports coefficient
    drift when the largest / smallest epsilon is dropped.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    fits = []
    for t0 in samples.t0_values():
        rows = samples.for_t0(t0)
        eps = np.array([e for (e, _, _) in rows], dtype=complex)
        h = np.array([t1 - t0 for (_, t1, _) in rows], dtype=complex)
        if len(set(eps.tolist())) < order + 2:
            raise IllConditionedFit(
                f"need at least {order + 2} distinct epsilon values")
        mags = np.abs(eps)
        if max(mags) / min(mags) < 10.0:
            raise IllConditionedFit("epsilon list must span at least a decade")
        ncols = order + 1
        A = np.stack([eps ** (k + 1) for k in range(ncols)], axis=1)
        scale = np.linalg.norm(A, axis=0)
        As = A / scale
        if np.linalg.cond(As) > params.fit_condition_limit:
            raise IllConditionedFit("scaled design matrix is ill conditioned")

        def solve(Asub, hsub):
            sol, *_ = np.linalg.lstsq(Asub, hsub, rcond=None)
            return sol

        sol = solve(As, h) / scale
        resid = float(np.linalg.norm(A @ sol - h))
        dof = max(len(eps) - ncols, 1)
        sigma = resid / math.sqrt(dof)
        pinv = np.linalg.pinv(A)
        bars = sigma * np.linalg.norm(pinv, axis=1)

        spread = 0.0
        if len(eps) > ncols + 1:
            for drop in (np.argmax(mags), np.argmin(mags)):
                keep = np.ones(len(eps), dtype=bool)
                keep[drop] = False
                sub = solve(A[keep] / scale, h[keep]) / scale
                spread = max(spread, float(np.max(np.abs(sub[:order] - sol[:order]))))
        fits.append(CoefficientFit(
            t0, complex(sol[0]), complex(sol[1]) if order >= 2 else None,
            float(bars[0]), float(bars[1]) if order >= 2 else 0.0,
            spread, resid))
    return fits


@dataclass
class DefectReport:
    """Commutator-holonomy defect against the cubic-scaling null hypothesis."""

    epsilons: tuple
    defects: list              # per eps: max over t0 of |h(t0) - t0|
    fitted_m2: complex
    m2_err: float
    commuting: bool
    tol_m2: float


def class_word(coords):
    """Canonical word over basis letters realizing an integer class."""
    letters = []
    for i, c in enumerate(coords):
        if c > 0:
            letters.extend([(i, +1)] * int(c))
        elif c < 0:
            letters.extend([(i, -1)] * int(-c))
    return letters


def inverse_word(letters):
    return [(i, -p) for (i, p) in reversed(letters)]


def commutator_letters(d1_coords, d2_coords):
    w1 = class_word(d1_coords)
    w2 = class_word(d2_coords)
    return w1 + w2 + inverse_word(w1) + inverse_word(w2)


def commutation_defect(model: FibrationModel, omega: PlanarOneForm,
                       d1_coords, d2_coords, epsilons=None, t0_grid=None,
                       tol_m2: float = 1e-6,
                       params: Numerics | None = None) -> DefectReport:
    """Deviation of the commutator holonomy from the identity.

    Verdict "commuting at tolerance" means no eps^2 term was detected: the
    fit of the defect curve has |M2| <= tol_m2, so the defect is compatible
    with the cubic (eps^3 and beyond) scaling of a commuting pair.
    """
    params = params or model.params
    epsilons = tuple(epsilons) if epsilons is not None else params.default_epsilons
    if not epsilons:
        raise ValueError("epsilon list must be nonempty")
    t0_grid = tuple(t0_grid) if t0_grid is not None else (model.base,)
    letters = commutator_letters(d1_coords, d2_coords)
    samples = holonomy_word(model, omega, letters, epsilons, t0_grid, params)
    defects = []
    for e in epsilons:
        worst = 0.0
        for (ee, t0, t1, _) in samples.entries:
            if ee == e:
                worst = max(worst, abs(t1 - t0))
        defects.append(worst)
    fits = melnikov_fit(samples, order=2, params=params)
    m2_best = max(fits, key=lambda ft: abs(ft.m2))
    commuting = abs(m2_best.m2) <= tol_m2
    return DefectReport(epsilons, defects, m2_best.m2, m2_best.m2_err,
                        commuting, tol_m2)
