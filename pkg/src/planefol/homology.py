"""Integer homology layer: intersection form, Picard-Lefschetz operators,
monodromy orbits, and the commutation-criterion checker.

Everything here is exact integer linear algebra once the intersection form
has been extracted from realized cycles by signed crossing counts.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousCrossing, SizeLimit
from .fibration import FibrationModel, polyline_crossings
from .rootfind import polyval
from .settings import DEFAULTS, Numerics


@dataclass(frozen=True)
class CycleClass:
    """Integer coordinates in the distinguished vanishing-cycle basis."""

    coords: tuple

    @classmethod
    def basis(cls, i: int, mu: int) -> "CycleClass":
        v = [0] * mu
        v[i] = 1
        return cls(tuple(v))

    @classmethod
    def of(cls, v) -> "CycleClass":
        if isinstance(v, CycleClass):
            return v
        return cls(tuple(int(c) for c in v))

    def as_array(self) -> np.ndarray:
        return np.array(self.coords, dtype=int)

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coords)

    def __len__(self):
        return len(self.coords)


@dataclass
class IntersectionForm:
    """Antisymmetric integer pairing matrix I[i][j] = <delta_i, delta_j>."""

    matrix: np.ndarray
    raw_max_deviation: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=int)
        if not np.array_equal(m, -m.T):
            raise ValueError("intersection matrix must be antisymmetric")
        if np.any(np.diag(m) != 0):
            raise ValueError("intersection matrix must have zero diagonal")
        self.matrix = m

    @property
    def mu(self) -> int:
        return self.matrix.shape[0]

    def pair(self, a, b) -> int:
        va = CycleClass.of(a).as_array()
        vb = CycleClass.of(b).as_array()
        return int(va @ self.matrix @ vb)


def _crossing_sheet_values(loop, seg: int, s: float, z: complex, g_coeffs):
    """Exact fiber y at a crossing point, via the nearest-sheet lift."""
    y_interp = loop.ys[seg] + s * (loop.ys[seg + 1] - loop.ys[seg])
    r = complex(np.sqrt(polyval(np.asarray(g_coeffs, complex), z) + loop.t))
    y = r if abs(r - y_interp) <= abs(-r - y_interp) else -r
    quality = abs(y - y_interp)
    return y, quality, abs(r)


def intersection_number(real_a, real_b, g_coeffs,
                        params: Numerics = DEFAULTS,
                        _retries: int = 2) -> int:
    """Signed crossing count of two realized loops on a common fiber.

    x-plane crossings are kept only when both loops sit on the same sheet;
    each contributes the orientation sign of the tangent frame.  Tangential
    or sheet-ambiguous crossings trigger resampling, then AmbiguousCrossing.
    """
    la = real_a.loop if hasattr(real_a, "loop") else real_a
    lb = real_b.loop if hasattr(real_b, "loop") else real_b
    if abs(la.t - lb.t) > 1e-10 * max(1.0, abs(la.t)):
        raise ValueError("intersection requires realizations on a common fiber")
    total = 0
    ambiguous = False
    for (i, j, s, u, z) in polyline_crossings(la.xs, lb.xs):
        if s < 0:  # collinear overlap
            ambiguous = True
            break
        ya, qa, r = _crossing_sheet_values(la, i, s, z, g_coeffs)
        yb, qb, _ = _crossing_sheet_values(lb, j, u, z, g_coeffs)
        if max(qa, qb) > 0.5 * r:
            ambiguous = True
            break
        if abs(ya - yb) > abs(ya + yb):
            continue  # opposite sheets: no crossing on the curve
        wa = la.xs[i + 1] - la.xs[i]
        wb = lb.xs[j + 1] - lb.xs[j]
        cr = (np.conj(wa) * wb).imag
        if abs(cr) < 1e-9 * abs(wa) * abs(wb):
            ambiguous = True
            break
        total += 1 if cr > 0 else -1
    if ambiguous:
        if _retries > 0:
            la2 = la.resampled(2, g_coeffs)
            lb2 = lb.resampled(2, g_coeffs)
            return intersection_number(la2, lb2, g_coeffs, params, _retries - 1)
        raise AmbiguousCrossing(
            "crossing configuration still ambiguous after resampling")
    return total


def intersection_matrix(model: FibrationModel,
                        params: Numerics | None = None) -> IntersectionForm:
    """Geometric intersection form of the distinguished basis at the base fiber."""
    params = params or model.params
    mu = model.mu
    reals = [model.realize(i) for i in range(mu)]
    m = np.zeros((mu, mu), dtype=int)
    for i in range(mu):
        for j in range(i + 1, mu):
            v = intersection_number(reals[i], reals[j], model.g_coeffs, params)
            m[i, j] = v
            m[j, i] = -v
    return IntersectionForm(m)


# ---------------------------------------------------------------------------
# Dynkin diagram
# ---------------------------------------------------------------------------

@dataclass
class DynkinGraph:
    vertices: list
    edges: list                 # sorted pairs (i, j), i < j
    connected: bool

    def adjacency(self) -> dict:
        adj = {v: [] for v in self.vertices}
        for (i, j) in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def to_dot(self) -> str:
        lines = ["graph dynkin {"]
        for v in self.vertices:
            lines.append(f"  {v + 1};")
        for (i, j) in self.edges:
            lines.append(f"  {i + 1} -- {j + 1};")
        lines.append("}")
        return "\n".join(lines)


def dynkin(form: IntersectionForm) -> DynkinGraph:
    mu = form.mu
    edges = [(i, j) for i in range(mu) for j in range(i + 1, mu)
             if form.matrix[i, j] != 0]
    seen = set()
    stack = [0] if mu else []
    adj = {v: set() for v in range(mu)}
    for (i, j) in edges:
        adj[i].add(j)
        adj[j].add(i)
    while stack:
        v = stack.pop()
        if v in seen:
            continue
        seen.add(v)
        stack.extend(adj[v] - seen)
    return DynkinGraph(list(range(mu)), edges, len(seen) == mu)


# ---------------------------------------------------------------------------
# Picard-Lefschetz operators
# ---------------------------------------------------------------------------

@dataclass
class PLOperator:
    """Integer monodromy matrix around one critical value (column action)."""

    matrix: np.ndarray
    index: int
    sign: int

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=int)

    def apply(self, cls) -> CycleClass:
        return CycleClass(tuple(self.matrix @ CycleClass.of(cls).as_array()))

    def inverse_matrix(self) -> np.ndarray:
        # unipotent with (M - Id)^2 = 0, so the inverse is 2*Id - M
        n = self.matrix.shape[0]
        return 2 * np.eye(n, dtype=int) - self.matrix

    def preserves(self, form: IntersectionForm) -> bool:
        return np.array_equal(self.matrix.T @ form.matrix @ self.matrix,
                              form.matrix)

    def unipotent(self) -> bool:
        n = self.matrix.shape[0]
        d = self.matrix - np.eye(n, dtype=int)
        return not np.any(d @ d)


def picard_lefschetz(i: int, form: IntersectionForm, sign: int = +1) -> PLOperator:
    """Monodromy around c_i on classes: delta -> delta + sign*<delta, delta_i>*delta_i."""
    mu = form.mu
    if not 0 <= i < mu:
        raise IndexError("critical value index out of range")
    m = np.eye(mu, dtype=int)
    for j in range(mu):
        m[i, j] += sign * form.matrix[j, i]
    return PLOperator(m, i, sign)


def monodromy_orbit_span(start, operators, depth: int | None = None,
                         params: Numerics = DEFAULTS,
                         max_visited: int = 20000):
    """Rank over Q of the orbit of a class under operators and inverses.

    Breadth-first closure to the depth bound (default 2*mu); returns
    (rank, exhausted) where exhausted means the bound cut off a still-growing
    orbit.  Since rank is capped by mu, reaching full rank ends the search.
    """
    start = CycleClass.of(start)
    mu = len(start)
    depth = depth if depth is not None else params.orbit_depth_factor * mu
    mats = []
    for op in operators:
        m = op.matrix if isinstance(op, PLOperator) else np.asarray(op, dtype=int)
        mats.append(m)
        if isinstance(op, PLOperator):
            mats.append(op.inverse_matrix())
    visited = {start.coords}
    frontier = [start.as_array()]
    vectors = [start.as_array()]
    exhausted = False
    for _ in range(depth):
        if not frontier:
            break
        rank = np.linalg.matrix_rank(np.array(vectors, dtype=float))
        if rank >= mu:
            break
        new = []
        for v in frontier:
            for m in mats:
                w = m @ v
                key = tuple(int(c) for c in w)
                if key not in visited:
                    visited.add(key)
                    new.append(w)
                    vectors.append(w)
            if len(visited) > max_visited:
                exhausted = True
                break
        if exhausted:
            break
        frontier = new
    else:
        if frontier:
            exhausted = True
    rank = int(np.linalg.matrix_rank(np.array(vectors, dtype=float)))
    return rank, exhausted


# ---------------------------------------------------------------------------
# condition (6): the commutation criterion
# ---------------------------------------------------------------------------

@dataclass
class FacaVerdict:
    holds: bool
    branch: str                  # "L1_zero" | "L2_zero" | "independent" | "fails"
    witness: tuple | None = None  # violating delta when the condition fails


def _pair_covectors(d1, d2, form: IntersectionForm):
    I = form.matrix
    r1 = CycleClass.of(d1).as_array() @ I      # delta -> <delta_1, delta>
    r2 = CycleClass.of(d2).as_array() @ I
    return r1, r2


def condition_faca(d1, d2, form: IntersectionForm) -> FacaVerdict:
    """Fast commutation criterion with certificate.

    The quantified condition holds iff L1 == 0, or L2 == 0, or L1 and L2 are
    linearly independent, where L_k(delta) = <delta_k, delta>.  On failure,
    a violating delta is the first basis vector where L1 is nonzero (both
    pairings are then nonzero and no delta' can separate them).
    """
    r1, r2 = _pair_covectors(d1, d2, form)
    if not np.any(r1):
        return FacaVerdict(True, "L1_zero")
    if not np.any(r2):
        return FacaVerdict(True, "L2_zero")
    # exact dependence test over Q via all 2x2 minors
    mu = len(r1)
    independent = any(r1[a] * r2[b] - r1[b] * r2[a] != 0
                      for a in range(mu) for b in range(a + 1, mu))
    if independent:
        return FacaVerdict(True, "independent")
    m = int(np.nonzero(r1)[0][0])
    witness = tuple(1 if k == m else 0 for k in range(mu))
    return FacaVerdict(False, "fails", witness)


def condition_faca_bruteforce(d1, d2, form: IntersectionForm, box_radius: int,
                              params: Numerics = DEFAULTS) -> FacaVerdict:
    """Direct enumeration of the commutation criterion over a lattice box.

    delta runs over [-r, r]^mu in C order.  For each delta needing the
    existential clause, delta' ranges over the same box; since the box
    contains every basis vector, a nonzero functional alpha*L2 - beta*L1 is
    witnessed by some e_m in the box, so the rowwise test below *is* the
    literal delta' scan.  The first failing delta is confirmed by an
    explicit full scan over delta'.
    """
    if box_radius < 1:
        raise ValueError("box_radius must be >= 1")
    mu = form.mu
    size = (2 * box_radius + 1) ** mu
    if size > params.faca_budget:
        raise SizeLimit(f"box of size {size} exceeds budget {params.faca_budget}")
    r1, r2 = _pair_covectors(d1, d2, form)
    rng = np.arange(-box_radius, box_radius + 1)
    grids = np.meshgrid(*([rng] * mu), indexing="ij")
    box = np.stack([g.ravel() for g in grids], axis=1)     # C order
    A1 = box @ r1          # <delta_1, delta> for every delta
    A2 = box @ r2
    need = (A1 != 0) & (A2 != 0)
    if not np.any(need):
        return FacaVerdict(True, "clauses_1_2")
    idx = np.nonzero(need)[0]
    # covector alpha*L2 - beta*L1 per delta; zero row <=> no delta' works
    cov = A1[idx, None] * r2[None, :] - A2[idx, None] * r1[None, :]
    bad = ~np.any(cov, axis=1)
    if not np.any(bad):
        return FacaVerdict(True, "exists_clause")
    first = idx[np.nonzero(bad)[0][0]]
    delta = box[first]
    # literal confirmation for the reported witness
    expr = A1[first] * A2 - A2[first] * A1
    if np.any(expr != 0):  # pragma: no cover - cannot happen, see docstring
        return FacaVerdict(True, "exists_clause")
    return FacaVerdict(False, "fails", tuple(int(c) for c in delta))
