"""Numeric parameters and tolerances, collected in one place.

Every threshold used by the library lives here with its default value, so
reports can echo effective settings and the CLI can scale them uniformly.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass


@dataclass(frozen=True)
class Numerics:
    """Tolerances and discretization parameters with library-wide defaults."""

    # algebra
    newton_residual: float = 1e-12        # gradient residual after polishing
    value_separation: float = 1e-9        # critical values closer than this are "coincident"
    cluster_radius: float = 1e-8          # root clustering / dedup radius
    hessian_tol: float = 1e-9             # |det Hess| below this is "degenerate"
    exactness_residual: float = 1e-10     # least-squares acceptance (unused for exact solves)

    # fibration
    path_clearance: float = 0.15          # t-plane paths keep this distance from off-target critical values
    base_clearance_factor: float = 10.0   # b must be >= factor * path_clearance from C
    loop_samples: int = 512               # samples per realized cycle
    on_fiber_residual: float = 1e-10      # |y^2 - g(x) - t| bound on stored samples
    loop_close_tol: float = 1e-12
    near_collision_switch: float = 1e-6   # below this |t - c|, use the local quadratic model
    track_step_floor: float = 1e-12       # step underflow threshold for branch tracking
    transport_newton_tol: float = 1e-13
    transport_move_factor: float = 0.25   # max sample move per step vs local y-clearance
    detour_attempts: int = 6

    # periods
    period_tol: float = 1e-10
    quad_order: int = 16
    quad_max_splits: int = 4
    pole_clearance: float = 1e-6          # min |y| on a loop when the form has poles at y = 0
    monodromy_int_tol: float = 1e-6       # max |entry - round(entry)| for integer rounding
    ill_condition_limit: float = 1e8
    iterated_tol: float = 1e-9
    ratio_guard: float = 1e-13

    # melnikov
    zero_verdict_tol: float = 1e-9
    zero_verdict_min_samples: int = 8

    # holonomy
    ode_local_tol: float = 1e-12          # accumulated tolerance over one full word
    eps_guard: float = 0.5                # require |eps * omega(dZ/dt)| <= eps_guard
    default_epsilons: tuple = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4)
    fit_condition_limit: float = 1e10

    # homology
    orbit_depth_factor: int = 2           # BFS depth bound = factor * mu
    faca_budget: int = 2_000_000          # max box size for the brute-force oracle
    crossing_round_tol: float = 0.25      # |raw - round| bound for intersection sums

    # fields multiplied by the CLI --tol-scale flag
    _SCALED = (
        "newton_residual", "on_fiber_residual", "period_tol", "iterated_tol",
        "ode_local_tol", "zero_verdict_tol", "monodromy_int_tol",
        "transport_newton_tol", "exactness_residual",
    )

    def scaled(self, factor: float) -> "Numerics":
        """Return a copy with the pure tolerances multiplied by ``factor``."""
        if factor == 1.0:
            return self
        updates = {name: getattr(self, name) * factor for name in self._SCALED}
        return dataclasses.replace(self, **updates)

    def replace(self, **kw) -> "Numerics":
        return dataclasses.replace(self, **kw)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["default_epsilons"] = list(self.default_epsilons)
        return d


DEFAULTS = Numerics()
