"""Base geometry and cycle realizations for hyperelliptic fibers.

Builds the distinguished path system in the t-plane, tracks branch points of
y^2 = g(x) + t along paths, realizes vanishing cycles as explicit sampled
loops on fibers, and continues loops along t-paths by the normal flow.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (BasePointTooClose, ClearanceFailure, LabelAmbiguity,
                     PlanefolError, StepUnderflow, UnresolvableCrossing)
from .polynomials import BivarPoly, CriticalSet, QQi, critical_set, is_hyperelliptic
from .rootfind import aberth_roots, polyval, polyder, sort_key
from .settings import DEFAULTS, Numerics

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# planar geometry helpers
# ---------------------------------------------------------------------------

def _cross(a: complex, b: complex) -> float:
    return a.real * b.imag - a.imag * b.real


def point_segment_distance(p: complex, a: complex, b: complex) -> float:
    d = b - a
    L2 = abs(d) ** 2
    if L2 == 0.0:
        return abs(p - a)
    s = max(0.0, min(1.0, ((p - a).real * d.real + (p - a).imag * d.imag) / L2))
    return abs(p - (a + s * d))


def polyline_crossings(P: np.ndarray, Q: np.ndarray, eps: float = 1e-14):
    """Proper crossings between two polylines (arrays of complex vertices).

    Returns a list of (i, j, s, u, z): segment indices, local parameters in
    [0, 1), and the crossing point.  Near-parallel overlapping segments are
    reported with s = u = -1 so callers can treat them as violations.
    """
    A0 = P[:-1]
    dA = P[1:] - P[:-1]
    B0 = Q[:-1]
    dB = Q[1:] - Q[:-1]
    out = []
    scale = max(np.max(np.abs(dA)) if len(dA) else 1.0,
                np.max(np.abs(dB)) if len(dB) else 1.0, 1e-30)
    # all-pairs 2x2 solves, vectorized
    cAB = (dA.real[:, None] * dB.imag[None, :]
           - dA.imag[:, None] * dB.real[None, :])
    W = B0[None, :] - A0[:, None]
    cW_B = (W.real * dB.imag[None, :] - W.imag * dB.real[None, :])
    cW_A = (W.real * dA.imag[:, None] - W.imag * dA.real[:, None])
    with np.errstate(divide="ignore", invalid="ignore"):
        s = cW_B / cAB
        u = cW_A / cAB
    proper = (np.abs(cAB) > eps * scale * scale) & \
             (s >= 0.0) & (s < 1.0) & (u >= 0.0) & (u < 1.0)
    for i, j in zip(*np.nonzero(proper)):
        z = A0[i] + s[i, j] * dA[i]
        out.append((int(i), int(j), float(s[i, j]), float(u[i, j]), complex(z)))
    # collinear overlaps
    par = np.abs(cAB) <= eps * scale * scale
    if np.any(par):
        for i, j in zip(*np.nonzero(par)):
            a0, a1 = P[i], P[i + 1]
            b0, b1 = Q[j], Q[j + 1]
            if abs(_cross(a1 - a0, b0 - a0)) > eps * scale * scale:
                continue  # parallel but offset
            da = a1 - a0
            L2 = abs(da) ** 2
            if L2 == 0:
                continue
            t0 = ((b0 - a0).real * da.real + (b0 - a0).imag * da.imag) / L2
            t1 = ((b1 - a0).real * da.real + (b1 - a0).imag * da.imag) / L2
            lo, hi = min(t0, t1), max(t0, t1)
            if hi > eps and lo < 1.0 - eps and hi - max(lo, 0.0) > eps:
                out.append((int(i), int(j), -1.0, -1.0, complex(a0)))
    return out


# ---------------------------------------------------------------------------
# t-plane paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LineLeg:
    z0: complex
    z1: complex

    @property
    def length(self):
        return abs(self.z1 - self.z0)

    def point(self, s: float) -> complex:
        return self.z0 + s * (self.z1 - self.z0)

    def reversed(self):
        return LineLeg(self.z1, self.z0)


@dataclass(frozen=True)
class ArcLeg:
    center: complex
    radius: float
    a0: float
    a1: float

    @property
    def length(self):
        return abs(self.a1 - self.a0) * self.radius

    def point(self, s: float) -> complex:
        ang = self.a0 + s * (self.a1 - self.a0)
        return self.center + self.radius * complex(math.cos(ang), math.sin(ang))

    def reversed(self):
        return ArcLeg(self.center, self.radius, self.a1, self.a0)


@dataclass(frozen=True)
class TPath:
    """Piecewise path in the t-plane: line segments and circle arcs."""

    legs: tuple

    @classmethod
    def segment(cls, a: complex, b: complex) -> "TPath":
        return cls((LineLeg(complex(a), complex(b)),))

    @classmethod
    def from_waypoints(cls, pts) -> "TPath":
        pts = [complex(p) for p in pts]
        if len(pts) < 2:
            raise ValueError("a path needs at least two waypoints")
        legs = []
        for a, b in zip(pts[:-1], pts[1:]):
            if a == b:
                raise ValueError("consecutive waypoints must be distinct")
            legs.append(LineLeg(a, b))
        return cls(tuple(legs))

    @classmethod
    def loop_around(cls, base: complex, center: complex, radius: float,
                    orientation: int = +1) -> "TPath":
        """Lollipop loop: base -> circle entry, full circle, back to base."""
        u = (base - center) / abs(base - center)
        entry = center + radius * u
        a0 = math.atan2(u.imag, u.real)
        a1 = a0 + orientation * TWO_PI
        return cls((LineLeg(base, entry), ArcLeg(center, radius, a0, a1),
                    LineLeg(entry, base)))

    @property
    def start(self) -> complex:
        return self.legs[0].point(0.0)

    @property
    def end(self) -> complex:
        return self.legs[-1].point(1.0)

    @property
    def length(self) -> float:
        return sum(leg.length for leg in self.legs)

    def reversed(self) -> "TPath":
        return TPath(tuple(leg.reversed() for leg in reversed(self.legs)))

    def concat(self, other: "TPath") -> "TPath":
        return TPath(self.legs + other.legs)

    def point(self, u: float) -> complex:
        """Point at global parameter u in [0, 1], legs weighted by length."""
        lens = [leg.length for leg in self.legs]
        total = sum(lens)
        target = u * total
        acc = 0.0
        for leg, L in zip(self.legs, lens):
            if target <= acc + L or leg is self.legs[-1]:
                s = 0.0 if L == 0 else (target - acc) / L
                return leg.point(min(max(s, 0.0), 1.0))
            acc += L
        return self.legs[-1].point(1.0)

    def waypoints(self, per_arc: int = 32) -> list:
        """Waypoint list (arcs discretized), the config serialization form."""
        pts = [self.legs[0].point(0.0)]
        for leg in self.legs:
            if isinstance(leg, LineLeg):
                pts.append(leg.z1)
            else:
                n = max(4, per_arc)
                pts.extend(leg.point((k + 1) / n) for k in range(n))
        return pts

    def locate(self, t: complex, tol: float = 1e-7):
        """Global parameter u with path(u) == t, or None if t is off the path."""
        grid = np.linspace(0.0, 1.0, 4097)
        vals = np.array([self.point(u) for u in grid])
        k = int(np.argmin(np.abs(vals - t)))
        lo = grid[max(k - 1, 0)]
        hi = grid[min(k + 1, len(grid) - 1)]
        for _ in range(80):
            m1 = lo + (hi - lo) / 3
            m2 = hi - (hi - lo) / 3
            if abs(self.point(m1) - t) < abs(self.point(m2) - t):
                hi = m2
            else:
                lo = m1
        u = 0.5 * (lo + hi)
        if abs(self.point(u) - t) > tol * max(1.0, self.length):
            return None
        return u


# ---------------------------------------------------------------------------
# branch points and tracking
# ---------------------------------------------------------------------------

@dataclass
class BranchPoints:
    points: np.ndarray      # sorted by the fixed total order
    degenerate: bool


def branch_points(g_coeffs: np.ndarray, t: complex,
                  params: Numerics = DEFAULTS) -> BranchPoints:
    """Roots of g(x) + t = 0 in the fixed total order."""
    c = np.asarray(g_coeffs, dtype=complex).copy()
    c[0] += t
    roots = aberth_roots(c)
    reps_sorted = np.array(sorted(roots, key=sort_key))
    degenerate = False
    for a in range(len(reps_sorted)):
        for b in range(a + 1, len(reps_sorted)):
            if abs(reps_sorted[a] - reps_sorted[b]) <= params.cluster_radius * 100:
                degenerate = True
    return BranchPoints(reps_sorted, degenerate)


@dataclass
class BranchTrace:
    """Continuation record of branch points along a t-path."""

    t_values: list
    positions: list                 # list of arrays, aligned with base labels
    colliding_pair: tuple | None    # base labels of the vanishing pair
    collision_x: complex | None
    reached_u: float

    @property
    def start(self) -> np.ndarray:
        return self.positions[0]

    @property
    def final(self) -> np.ndarray:
        return self.positions[-1]


def _greedy_match(prev: np.ndarray, new: np.ndarray):
    """Bijective nearest matching between two equally sized point sets."""
    n = len(prev)
    pairs = sorted(((abs(prev[i] - new[j]), i, j)
                    for i in range(n) for j in range(n)))
    perm = [-1] * n
    used_j = [False] * n
    for _, i, j in pairs:
        if perm[i] == -1 and not used_j[j]:
            perm[i] = j
            used_j[j] = True
    return np.array([new[perm[i]] for i in range(n)])


def track_branch_points(g_coeffs, path: TPath, u_end: float = 1.0,
                        params: Numerics = DEFAULTS,
                        detect_collision: bool = True) -> BranchTrace:
    """Follow the roots of g(x) + path(u) from u = 0, keeping labels.

    Stops at ``u_end``, or earlier when two roots are about to collide (a
    path terminating at a critical value); the colliding pair is reported by
    its base labels.
    """
    g_coeffs = np.asarray(g_coeffs, dtype=complex)
    t0 = path.point(0.0)
    current = branch_points(g_coeffs, t0, params).points
    n = len(current)
    if n < 2:
        return BranchTrace([t0], [current], None, None, 0.0)
    span = max(abs(current[a] - current[b])
               for a in range(n) for b in range(a + 1, n))
    collide_at = 2e-3 * span
    ts = [t0]
    traj = [current.copy()]
    u = 0.0
    du = min(0.05, u_end)
    pair = None
    while u < u_end - 1e-15:
        du = min(du, u_end - u)
        stepped = False
        while not stepped:
            t_next = path.point(u + du)
            c = g_coeffs.copy()
            c[0] += t_next
            roots = aberth_roots(c, warm_start=current)
            matched = _greedy_match(current, roots)
            move = np.max(np.abs(matched - current))
            min_sep = min(abs(matched[a] - matched[b])
                          for a in range(n) for b in range(a + 1, n))
            if move > min_sep / 3.0 and du > params.track_step_floor:
                du *= 0.5
                if du <= params.track_step_floor:
                    raise LabelAmbiguity(
                        "branch tracking step underflow: roots closer than "
                        "the matching resolution")
                continue
            stepped = True
        current = matched
        u += du
        ts.append(t_next)
        traj.append(current.copy())
        du = min(du * 1.5, 0.05)
        if detect_collision and min_sep < collide_at:
            dists = [(abs(current[a] - current[b]), a, b)
                     for a in range(n) for b in range(a + 1, n)]
            dists.sort()
            if len(dists) > 1 and dists[0][0] > dists[1][0] / 3.0:
                raise LabelAmbiguity(
                    "several root pairs collide simultaneously on this path")
            pair = (dists[0][1], dists[0][2])
            break

    collision_x = None
    if pair is not None:
        # the collision locus solves g'(x) = 0 near the pair midpoint
        mid = 0.5 * (current[pair[0]] + current[pair[1]])
        gp = polyder(g_coeffs)
        gpp = polyder(gp)
        x = mid
        for _ in range(60):
            d = polyval(gpp, x)
            if abs(d) < 1e-250:
                break
            step = polyval(gp, x) / d
            x -= step
            if abs(step) < 1e-14 * (1 + abs(x)):
                break
        collision_x = complex(x)
    return BranchTrace(ts, traj, pair, collision_x, u)


# ---------------------------------------------------------------------------
# fibration model and distinguished system
# ---------------------------------------------------------------------------

@dataclass
class FibrationModel:
    """f with its critical data, base point, and distinguished path system."""

    f: BivarPoly
    critical: CriticalSet
    base: complex
    order: list                    # basis index -> index into critical.values
    paths: list                    # TPath from base to each ordered critical value
    backend: str
    g: BivarPoly | None
    g_coeffs: np.ndarray | None
    params: Numerics = DEFAULTS
    _traces: dict = field(default_factory=dict, repr=False)
    _realized: dict = field(default_factory=dict, repr=False)

    @property
    def mu(self) -> int:
        return self.critical.mu

    def crit_value(self, i: int) -> complex:
        return self.critical.values[self.order[i]]

    def base_branch_points(self) -> BranchPoints:
        return branch_points(self.g_coeffs, self.base, self.params)

    def trace(self, i: int) -> BranchTrace:
        if i not in self._traces:
            self._traces[i] = track_branch_points(
                self.g_coeffs, self.paths[i], params=self.params)
        return self._traces[i]

    def vanishing_pair(self, i: int) -> tuple:
        tr = self.trace(i)
        if tr.colliding_pair is None:
            raise PlanefolError(
                f"no colliding pair detected along path {i}")
        return tr.colliding_pair

    def realize(self, i: int, t: complex | None = None):
        key = (i, t)
        if key not in self._realized:
            self._realized[key] = realize_vanishing_cycle(self, i, t)
        return self._realized[key]

    def realize_at(self, i: int, t: complex | None = None):
        """Realization of basis cycle i on the fiber over any regular t.

        On the distinguished path the ellipse realization is used directly;
        elsewhere the base realization is continued along the straight
        segment from the base point (which must stay clear of C).
        """
        if t is None:
            return self.realize(i)
        t = complex(t)
        key = ("at", i, t)
        if key in self._realized:
            return self._realized[key]
        if abs(t - self.base) <= 1e-12 * max(1.0, abs(self.base)):
            out = self.realize(i)
        elif self.paths[i].locate(t) is not None:
            out = self.realize(i, t)
        else:
            for c in self.critical.values:
                d = point_segment_distance(complex(c), self.base, t)
                if d < 0.5 * self.params.path_clearance:
                    raise PlanefolError(
                        f"straight continuation from base to {t} passes "
                        f"within {d:.3g} of critical value {c}")
            path = TPath.segment(self.base, t)
            out = transport_cycle(self.realize(i), path, model=self)
        self._realized[key] = out
        return out


def default_base_point(values, params: Numerics = DEFAULTS) -> complex:
    """Centroid of C displaced perpendicular to the diameter of C."""
    vals = [complex(v) for v in values]
    m = sum(vals) / len(vals)
    if len(vals) == 1:
        return vals[0] + 1.5
    diam = 0.0
    pair = (vals[0], vals[0])
    for a in range(len(vals)):
        for b in range(a + 1, len(vals)):
            d = abs(vals[a] - vals[b])
            if d > diam:
                diam = d
                pair = (vals[a], vals[b])
    u = (pair[1] - pair[0]) / diam
    b = m + 1.5 * diam * (1j * u)
    floor = params.base_clearance_factor * params.path_clearance
    k = 0
    while min(abs(b - v) for v in vals) < floor and k < 8:
        b = m + (b - m) * 2.0
        k += 1
    return b


def build_distinguished_system(critical: CriticalSet, base: complex | None = None,
                               params: Numerics = DEFAULTS):
    """Non-crossing paths from the base point to each critical value.

    Straight segments, with polygonal circular detours around blocking
    critical values; basis order is by argument of (c - b) at the base,
    counterclockwise from angle 0, ties broken by distance.
    """
    values = [complex(v) for v in critical.values]
    if len(values) == 0:
        raise BasePointTooClose("no critical values: nothing to connect")
    if critical.min_value_separation() <= params.value_separation:
        raise BasePointTooClose(
            "critical values separated below the distinctness tolerance; "
            "no valid distinguished system")
    if base is None:
        base = default_base_point(values, params)
    base = complex(base)
    min_dist = min(abs(base - v) for v in values)
    # the clearance parameter adapts to the geometry so that the base always
    # sits >= base_clearance_factor effective clearances away from C
    floor = 100.0 * params.value_separation
    if min_dist < floor:
        raise BasePointTooClose(
            f"base point {base} within {floor} of a critical value")
    eff_clearance = min(params.path_clearance,
                        min_dist / params.base_clearance_factor)

    def angle(v):
        a = math.atan2((v - base).imag, (v - base).real)
        return a + TWO_PI if a < 0 else a

    order = sorted(range(len(values)), key=lambda k: (angle(values[k]),
                                                      abs(values[k] - base)))

    h = eff_clearance
    for attempt in range(params.detour_attempts):
        paths = []
        for k in order:
            target = values[k]
            blockers = []
            for j, v in enumerate(values):
                if j == k:
                    continue
                if point_segment_distance(v, base, target) < h:
                    blockers.append(v)
            if not blockers:
                paths.append(TPath.segment(base, target))
                continue
            u = (target - base) / abs(target - base)
            side = 1j * u  # detour side convention: left of travel
            pts = [base]
            for q in sorted(blockers, key=lambda v: abs(v - base)):
                pts.append(q - h * u + h * side)
                pts.append(q + h * u + h * side)
            pts.append(target)
            paths.append(TPath.from_waypoints(pts))
        if _paths_disjoint(paths, base, params):
            return order, paths, base
        h *= 1.6
    raise UnresolvableCrossing(
        "could not disentangle distinguished paths within the detour budget")


def _paths_disjoint(paths, base, params) -> bool:
    tol = 1e-9 * max(1.0, max(p.length for p in paths))
    polys = [np.array(p.waypoints()) for p in paths]
    for a in range(len(polys)):
        for b in range(a + 1, len(polys)):
            for (_, _, s, u, z) in polyline_crossings(polys[a], polys[b]):
                if s < 0 or abs(z - base) > tol:
                    return False
    return True


def build_fibration(f: BivarPoly, base: complex | None = None,
                    params: Numerics = DEFAULTS,
                    crit: CriticalSet | None = None) -> FibrationModel:
    """Assemble the fibration model; exact backend only for f = y^2 - g(x)."""
    critical = crit if crit is not None else critical_set(f, params)
    order, paths, base = build_distinguished_system(critical, base, params)
    g = is_hyperelliptic(f)
    if g is not None and g.degree != float("-inf") and g.degree >= 2:
        backend = "hyperelliptic"
        g_coeffs = g.x_coeffs()
    else:
        backend = "holonomy-only"
        g, g_coeffs = None, None
    return FibrationModel(f, critical, base, order, paths, backend,
                          g, g_coeffs, params)


# ---------------------------------------------------------------------------
# fiber loops
# ---------------------------------------------------------------------------

@dataclass
class FiberLoop:
    """Sampled path on the fiber y^2 = g(x) + t (closed when xs[0] == xs[-1])."""

    t: complex
    xs: np.ndarray
    ys: np.ndarray
    closed: bool = True

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=complex)
        self.ys = np.asarray(self.ys, dtype=complex)

    @property
    def n_segments(self) -> int:
        return len(self.xs) - 1

    def reversed(self) -> "FiberLoop":
        return FiberLoop(self.t, self.xs[::-1].copy(), self.ys[::-1].copy(),
                         self.closed)

    def fiber_residual(self, g_coeffs) -> float:
        vals = self.ys**2 - polyval(np.asarray(g_coeffs, complex), self.xs) - self.t
        return float(np.max(np.abs(vals)))

    def resampled(self, factor: int, g_coeffs) -> "FiberLoop":
        """Insert ``factor - 1`` exact on-fiber points per segment."""
        if factor <= 1:
            return self
        xs_new = [self.xs[0]]
        ys_new = [self.ys[0]]
        g = np.asarray(g_coeffs, dtype=complex)
        for k in range(self.n_segments):
            x0, x1 = self.xs[k], self.xs[k + 1]
            y_prev = self.ys[k]
            for m in range(1, factor + 1):
                s = m / factor
                x = x0 + s * (x1 - x0)
                guess = self.ys[k] + s * (self.ys[k + 1] - self.ys[k])
                r = np.sqrt(polyval(g, x) + self.t)
                y = r if abs(r - guess) <= abs(-r - guess) else -r
                y_prev = y
                xs_new.append(x)
                ys_new.append(y)
        xs_new[-1] = self.xs[-1]
        ys_new[-1] = self.ys[-1]
        return FiberLoop(self.t, np.array(xs_new), np.array(ys_new), self.closed)


@dataclass
class CycleRealization:
    """A realized vanishing cycle: a FiberLoop plus bookkeeping."""

    loop: FiberLoop
    index: int | None = None       # basis index, when realized from a path
    orientation: int = +1
    cycle_class: object = None     # optional CycleClass tag

    @property
    def t(self):
        return self.loop.t

    @property
    def xs(self):
        return self.loop.xs

    @property
    def ys(self):
        return self.loop.ys

    def reversed(self) -> "CycleRealization":
        return CycleRealization(self.loop.reversed(), self.index,
                                -self.orientation, self.cycle_class)


def _initial_sheet(value: complex) -> complex:
    """Sheet convention: Re(y) >= 0, ties broken by Im(y) >= 0."""
    r = np.sqrt(complex(value))
    if abs(r.real) > 1e-13 * abs(r):
        return r if r.real > 0 else -r
    return r if r.imag >= 0 else -r


def _lift_loop(xs: np.ndarray, g_coeffs, t: complex, y0: complex | None = None):
    """Continuously track y = sqrt(g(x) + t) along sample points."""
    g = np.asarray(g_coeffs, dtype=complex)
    vals = polyval(g, xs) + t
    r = np.sqrt(vals)
    ys = np.empty_like(r)
    ys[0] = _initial_sheet(vals[0]) if y0 is None else \
        (r[0] if abs(r[0] - y0) <= abs(-r[0] - y0) else -r[0])
    for k in range(1, len(xs)):
        ys[k] = r[k] if abs(r[k] - ys[k - 1]) <= abs(-r[k] - ys[k - 1]) else -r[k]
    return ys


def _ellipse_around_pair(p: complex, q: complex, others, params: Numerics):
    """Ellipse (center, semi-axes, axis direction) around {p, q}, clear of others."""
    center = 0.5 * (p + q)
    d = abs(q - p)
    if d == 0:
        d = 1e-14
    u = (q - p) / d
    dmin = min((abs(r - center) for r in others), default=float("inf"))
    if dmin <= 0.65 * d:
        raise ClearanceFailure(
            "a third branch point sits too close to the colliding pair")
    # snug ellipse scaling with the pair separation, so shrinking pairs give
    # shrinking loops; capped away from the other branch points
    a = 0.75 * d
    if math.isfinite(dmin):
        a = min(a, 0.8 * dmin)
    a = max(a, 0.55 * d)
    b = 0.6 * a
    for _ in range(40):
        ok = True
        for r in others:
            w = (r - center) / u
            q2 = (w.real / a) ** 2 + (w.imag / b) ** 2
            if q2 < 1.69:  # demand 1.3x margin in elliptic radius
                ok = False
                break
        if ok and a > 0.52 * d:
            return center, a, b, u
        a *= 0.93
        b *= 0.93
        if a <= 0.52 * d:
            break
    raise ClearanceFailure(
        "no admissible ellipse around the colliding pair clears the other "
        "branch points; refine the path first")


def realize_vanishing_cycle(model: FibrationModel, i: int,
                            t: complex | None = None) -> CycleRealization:
    """Loop on the fiber over t encircling the colliding pair of path i.

    The x-projection is an ellipse around the two branch points that collide
    along the i-th distinguished path, traversed counterclockwise from its
    point of largest real part; y is tracked continuously so the lift closes
    on its starting sheet.
    """
    if model.backend != "hyperelliptic":
        raise PlanefolError("exact cycle realization needs the hyperelliptic backend")
    params = model.params
    c_i = model.crit_value(i)
    base = model.base
    if t is None:
        t = base
    t = complex(t)
    if abs(t - c_i) <= params.value_separation:
        raise PlanefolError("cannot realize a cycle at its critical value")

    pair = model.vanishing_pair(i)
    if abs(t - base) <= 1e-12 * max(1.0, abs(base)):
        pts = branch_points(model.g_coeffs, base, params).points
    else:
        path = model.paths[i]
        u = path.locate(t)
        if u is None:
            raise PlanefolError(f"t = {t} does not lie on distinguished path {i}")
        tr = track_branch_points(model.g_coeffs, path, u_end=u, params=params,
                                 detect_collision=False)
        pts = tr.final

    p, q = pts[pair[0]], pts[pair[1]]
    others = [pts[k] for k in range(len(pts)) if k not in pair]

    if abs(t - c_i) < params.near_collision_switch:
        # local quadratic model for the colliding pair; root tracking loses
        # digits at this range
        tr_full = model.trace(i)
        x_c = tr_full.collision_x
        gp = polyder(np.asarray(model.g_coeffs, complex))
        gpp = polyder(gp)
        half = polyval(gpp, x_c) / 2.0
        delta = np.sqrt(-(polyval(np.asarray(model.g_coeffs, complex), x_c) + t) / half)
        p, q = x_c - delta, x_c + delta

    center, a, b, u = _ellipse_around_pair(p, q, others, params)
    n = params.loop_samples
    # start at the boundary point of largest real part
    theta_star = math.atan2(-b * u.imag, a * u.real)
    theta = theta_star + TWO_PI * np.arange(n + 1) / n
    xs = center + u * (a * np.cos(theta) + 1j * b * np.sin(theta))
    xs[-1] = xs[0]
    ys = _lift_loop(xs, model.g_coeffs, t)
    if abs(ys[-1] - ys[0]) > abs(ys[-1] + ys[0]):
        raise ClearanceFailure(
            "sheet did not close after one traversal: an odd number of "
            "branch points inside the realization ellipse")
    ys[-1] = ys[0]
    loop = FiberLoop(t, xs, ys, closed=True)
    resid = loop.fiber_residual(model.g_coeffs)
    if resid > params.on_fiber_residual:
        raise PlanefolError(f"realized loop off-fiber by {resid:.2e}")
    return CycleRealization(loop, index=i, orientation=+1)


# ---------------------------------------------------------------------------
# transport along t-paths (normal flow)
# ---------------------------------------------------------------------------

def _normal_newton(f_grad, zs_x, zs_y, t_target, tol, max_iter=8):
    """Project points onto the fiber f = t along the conjugate-gradient field."""
    for _ in range(max_iter):
        fv, fx, fy = f_grad(zs_x, zs_y)
        err = fv - t_target
        worst = np.max(np.abs(err))
        if worst <= tol:
            return zs_x, zs_y, worst
        n2 = np.abs(fx) ** 2 + np.abs(fy) ** 2
        zs_x = zs_x - np.conj(fx) * err / n2
        zs_y = zs_y - np.conj(fy) * err / n2
    fv, _, _ = f_grad(zs_x, zs_y)
    return zs_x, zs_y, float(np.max(np.abs(fv - t_target)))


def transport_cycle(real, path: TPath, model: FibrationModel | None = None,
                    f: BivarPoly | None = None,
                    params: Numerics | None = None):
    """Continue a realized loop along a t-path by the normal flow.

    Each sample moves along (conj f_x, conj f_y)/|grad f|^2 so its f-value
    follows the path; Newton correction keeps the on-fiber residual at the
    transport tolerance.  Adaptive resampling preserves the sampling density.
    """
    if model is not None:
        f = model.f
        params = params or model.params
    params = params or DEFAULTS
    loop = real.loop if isinstance(real, CycleRealization) else real
    fpoly = f
    fdx, fdy = fpoly.dx(), fpoly.dy()

    def f_grad(X, Y):
        return fpoly.eval_grid(X, Y), fdx.eval_grid(X, Y), fdy.eval_grid(X, Y)

    xs = loop.xs.copy()
    ys = loop.ys.copy()
    spacing0 = float(np.median(np.abs(np.diff(xs)) + np.abs(np.diff(ys))))
    if spacing0 == 0:
        spacing0 = 1e-3
    t_cur = path.point(0.0)
    if abs(t_cur - loop.t) > 1e-9 * max(1.0, abs(loop.t)):
        raise PlanefolError("path must start at the loop's fiber value")

    u = 0.0
    du = 0.02
    floor = params.track_step_floor
    while u < 1.0 - 1e-15:
        du = min(du, 1.0 - u)
        while True:
            t_next = path.point(u + du)
            dt = t_next - t_cur
            fv, fx, fy = f_grad(xs, ys)
            n2 = np.abs(fx) ** 2 + np.abs(fy) ** 2
            move = np.abs(dt) / np.sqrt(n2)
            # keep each sample's move small relative to its sheet clearance
            clearance = np.abs(ys) + 1e-9
            if np.max(move / clearance) > params.transport_move_factor and du > floor:
                du *= 0.5
                if du <= floor:
                    raise StepUnderflow("transport step underflow near the "
                                        "critical locus")
                continue
            break
        px = xs + np.conj(fx) * dt / n2
        py = ys + np.conj(fy) * dt / n2
        px, py, resid = _normal_newton(f_grad, px, py, t_next,
                                       params.transport_newton_tol)
        if resid > params.on_fiber_residual and du > floor:
            du *= 0.5
            continue
        xs, ys = px, py
        xs[-1] = xs[0]
        ys[-1] = ys[0]
        t_cur = t_next
        u += du
        du = min(du * 1.5, 0.05)

        # adaptive resampling: split stretched segments
        gaps = np.abs(np.diff(xs)) + np.abs(np.diff(ys))
        if np.max(gaps) > 2.2 * spacing0 and len(xs) < 8 * (len(loop.xs)):
            keep_x, keep_y = [xs[0]], [ys[0]]
            for k in range(len(xs) - 1):
                if gaps[k] > 2.2 * spacing0:
                    mx = 0.5 * (xs[k] + xs[k + 1])
                    my = 0.5 * (ys[k] + ys[k + 1])
                    mx_a = np.array([mx]); my_a = np.array([my])
                    mx_a, my_a, _ = _normal_newton(f_grad, mx_a, my_a, t_cur,
                                                   params.transport_newton_tol)
                    keep_x.append(mx_a[0]); keep_y.append(my_a[0])
                keep_x.append(xs[k + 1]); keep_y.append(ys[k + 1])
            xs = np.array(keep_x); ys = np.array(keep_y)

    out = FiberLoop(t_cur, xs, ys, closed=loop.closed)
    if isinstance(real, CycleRealization):
        return CycleRealization(out, real.index, real.orientation, real.cycle_class)
    return out


# ---------------------------------------------------------------------------
# fiber connectors and loop words
# ---------------------------------------------------------------------------

def _plan_x_route(x0: complex, x1: complex, obstacles, clearance: float,
                  side: int = +1):
    """Polyline from x0 to x1 skirting obstacle points by polygonal detours.

    Single pass along the straight segment: each interior obstacle within the
    clearance band gets a two-waypoint detour on the chosen side; obstacles
    hugging the endpoints cannot be detoured and are left to the exact lift.
    """
    L = abs(x1 - x0)
    if L == 0:
        return [x0, x1]
    u = (x1 - x0) / L
    events = []
    for r in obstacles:
        if abs(r - x0) <= 1.2 * clearance or abs(r - x1) <= 1.2 * clearance:
            continue
        s = ((r - x0).real * u.real + (r - x0).imag * u.imag) / L
        if not 0.0 < s < 1.0:
            continue
        if abs(r - (x0 + s * L * u)) < clearance:
            events.append((s, r))
    events.sort(key=lambda e: (e[0], e[1].real, e[1].imag))
    h = 1.5 * clearance
    pts = [x0]
    for (_, r) in events:
        pts.append(r - h * u + side * 1j * h * u)
        pts.append(r + h * u + side * 1j * h * u)
    pts.append(x1)
    return pts


def fiber_connector(model: FibrationModel, t: complex,
                    z_from: tuple, z_to: tuple,
                    n_samples: int | None = None) -> FiberLoop:
    """Open on-fiber path from z_from to z_to over fiber t.

    Routes the x-projection around branch points; the sheet at the endpoint
    is matched by trying both detour sides, then by an explicit extra winding
    around the branch point nearest the target.
    """
    params = model.params
    bps = branch_points(model.g_coeffs, t, params).points
    min_gap = min((abs(bps[a] - bps[b]) for a in range(len(bps))
                   for b in range(a + 1, len(bps))), default=1.0)
    x0, y0 = z_from
    x1, y1 = z_to
    d_end = min(min(abs(r - x0) for r in bps), min(abs(r - x1) for r in bps))
    clearance = min(0.3 * min_gap, 0.7 * d_end)

    def build(route_pts, extra_wind=None):
        segs = []
        pts = list(route_pts)
        if extra_wind is not None:
            center, rho = extra_wind
            # insert a full circle around one branch point just before the end
            approach = pts[-1]
            u = (approach - center)
            u = u / abs(u) if abs(u) > 0 else 1.0 + 0j
            entry = center + rho * u
            a0 = math.atan2(u.imag, u.real)
            circle = [center + rho * np.exp(1j * (a0 + TWO_PI * k / 48))
                      for k in range(49)]
            pts = pts[:-1] + [entry] + circle + [entry, pts[-1]]
        # resample the polyline evenly, matching the sampling density of the
        # realized loops (segment length ~ 0.01 * geometry scale)
        pts = np.array(pts, dtype=complex)
        lens = np.abs(np.diff(pts))
        total = float(np.sum(lens))
        if n_samples is None:
            target = 0.01 * max(min_gap, 1e-9)
            n = int(min(max(96, total / target), 4096))
        else:
            n = max(n_samples, 8 * len(pts))
        s_targets = np.linspace(0.0, total, n + 1)
        cum = np.concatenate([[0.0], np.cumsum(lens)])
        xs = np.empty(n + 1, dtype=complex)
        for k, sv in enumerate(s_targets):
            j = int(np.searchsorted(cum, sv, side="right")) - 1
            j = min(max(j, 0), len(lens) - 1)
            local = (sv - cum[j]) / lens[j] if lens[j] > 0 else 0.0
            xs[k] = pts[j] + local * (pts[j + 1] - pts[j])
        xs[0], xs[-1] = x0, x1
        ys = _lift_loop(xs, model.g_coeffs, t, y0=y0)
        return xs, ys

    for side in (+1, -1):
        route = _plan_x_route(x0, x1, bps, clearance, side)
        xs, ys = build(route)
        if abs(ys[-1] - y1) <= abs(ys[-1] + y1):
            ys[-1] = y1
            return FiberLoop(t, xs, ys, closed=False)
    # explicit sheet fix: wind once around the branch point nearest x1
    near = min(bps, key=lambda r: abs(r - x1))
    rho = 0.45 * min(min((abs(near - r) for r in bps if r is not near),
                         default=min_gap), abs(near - x1) + min_gap)
    rho = max(rho, 0.15 * min_gap)
    route = _plan_x_route(x0, x1, bps, clearance, +1)
    xs, ys = build(route, extra_wind=(near, rho))
    if abs(ys[-1] - y1) <= abs(ys[-1] + y1):
        ys[-1] = y1
        return FiberLoop(t, xs, ys, closed=False)
    raise ClearanceFailure("could not match the target sheet of the connector")


def concat_loops(parts) -> FiberLoop:
    """Concatenate open/closed fiber paths with matching junction points."""
    xs = [parts[0].xs]
    ys = [parts[0].ys]
    t = parts[0].t
    for p in parts[1:]:
        if abs(p.t - t) > 1e-9 * max(1.0, abs(t)):
            raise PlanefolError("loop word letters live on different fibers")
        if abs(p.xs[0] - xs[-1][-1]) > 1e-8 or abs(p.ys[0] - ys[-1][-1]) > 1e-8:
            raise PlanefolError("loop word junction mismatch")
        xs.append(p.xs[1:])
        ys.append(p.ys[1:])
    X = np.concatenate(xs)
    Y = np.concatenate(ys)
    closed = abs(X[0] - X[-1]) < 1e-10 and abs(Y[0] - Y[-1]) < 1e-10
    if closed:
        X[-1] = X[0]
        Y[-1] = Y[0]
    return FiberLoop(t, X, Y, closed=closed)


def rebase_loop(loop: FiberLoop, connector: FiberLoop) -> FiberLoop:
    """Conjugate a closed loop by a connector: c * loop * c^{-1}."""
    return concat_loops([connector, loop, connector.reversed()])


def loop_word(model: FibrationModel, letters, t: complex | None = None) -> FiberLoop:
    """Closed loop realizing a word over basis cycles at a common base point.

    ``letters`` is a sequence of (index, power) with power in {+1, -1}; the
    common base point is the start of the first letter's realization, and
    other letters are conjugated there by on-fiber connectors.
    """
    if t is None:
        t = model.base
    cache_key = ("word", tuple(letters), complex(t))
    if cache_key in model._realized:
        return model._realized[cache_key]
    reals = {}
    for idx, _ in letters:
        if idx not in reals:
            reals[idx] = model.realize_at(idx, t)
    first_idx = letters[0][0]
    p0 = (reals[first_idx].xs[0], reals[first_idx].ys[0])
    connectors = {}
    for idx in reals:
        if idx == first_idx:
            connectors[idx] = None
        else:
            start = (reals[idx].xs[0], reals[idx].ys[0])
            connectors[idx] = fiber_connector(model, complex(t), p0, start)
    parts = []
    for idx, power in letters:
        base_loop = reals[idx].loop if power > 0 else reals[idx].loop.reversed()
        if connectors[idx] is None:
            parts.append(base_loop)
        else:
            parts.append(rebase_loop(base_loop, connectors[idx]))
    out = concat_loops(parts)
    model._realized[cache_key] = out
    return out


def commutator_word(model: FibrationModel, i: int, j: int,
                    t: complex | None = None) -> FiberLoop:
    return loop_word(model, [(i, +1), (j, +1), (i, -1), (j, -1)], t)


# ---------------------------------------------------------------------------
# local cycles for the holonomy-only backend
# ---------------------------------------------------------------------------

def realize_local_cycle(f: BivarPoly, point, value: complex, t: complex,
                        params: Numerics = DEFAULTS, n: int | None = None) -> FiberLoop:
    """Small vanishing cycle near a nondegenerate critical point of any f.

    Uses the Morse model from the Hessian, then Newton projection onto the
    true fiber; valid for |t - value| small relative to the local geometry.
    """
    n = n or params.loop_samples
    x0, y0 = point
    fx, fy = f.dx(), f.dy()
    a = fx.dx().evaluate(x0, y0)
    b = fx.dy().evaluate(x0, y0)
    d = fy.dy().evaluate(x0, y0)
    det = a * d - b * b
    if abs(det) < 1e-12:
        raise PlanefolError("local cycle needs a nondegenerate critical point")
    s = t - value
    r = np.sqrt(2.0 * s + 0j)
    theta = TWO_PI * np.arange(n + 1) / n
    if abs(a) >= abs(d):
        # f - value ~ (a u^2 + 2b uv + d v^2)/2 = (u'^2 + v'^2)/2
        sq_a = np.sqrt(a + 0j)
        sq_s = np.sqrt(d - b * b / a + 0j)
        up = r * np.cos(theta)
        vp = r * np.sin(theta)
        v = vp / sq_s
        uu = up / sq_a - (b / a) * v
    else:
        sq_d = np.sqrt(d + 0j)
        sq_s = np.sqrt(a - b * b / d + 0j)
        vp = r * np.cos(theta)
        up = r * np.sin(theta)
        uu = up / sq_s
        v = vp / sq_d - (b / d) * uu
    X = x0 + uu
    Y = y0 + v

    def f_grad(Xa, Ya):
        return f.eval_grid(Xa, Ya), fx.eval_grid(Xa, Ya), fy.eval_grid(Xa, Ya)

    X, Y, resid = _normal_newton(f_grad, X, Y, t, params.transport_newton_tol,
                                 max_iter=30)
    if resid > params.on_fiber_residual:
        raise PlanefolError(f"local cycle projection failed (residual {resid:.2e})")
    X[-1] = X[0]
    Y[-1] = Y[0]
    return FiberLoop(t, X, Y, closed=True)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def cycle_to_csv(real, path: str) -> None:
    """Write a realized cycle as CSV rows (s, x_re, x_im, y_re, y_im)."""
    loop = real.loop if isinstance(real, CycleRealization) else real
    n = len(loop.xs) - 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "x_re", "x_im", "y_re", "y_im"])
        for k in range(len(loop.xs)):
            s = k / max(n, 1)
            w.writerow([f"{s:.17g}",
                        f"{loop.xs[k].real:.17g}", f"{loop.xs[k].imag:.17g}",
                        f"{loop.ys[k].real:.17g}", f"{loop.ys[k].imag:.17g}"])
