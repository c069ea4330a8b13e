"""Numerics for plane polynomial foliations df + eps*omega: vanishing
cycles, intersection forms, monodromy, Abelian and iterated integrals,
Melnikov functions, and direct holonomy maps."""

__version__ = "0.1.0"

from .settings import DEFAULTS, Numerics                     # noqa: F401
from .polynomials import (BivarPoly, PlanarOneForm, QQi,     # noqa: F401
                          critical_set, parse_poly, relative_exactness,
                          tameness_report)
from .fibration import (FibrationModel, TPath, build_fibration,   # noqa: F401
                        branch_points, realize_vanishing_cycle,
                        track_branch_points, transport_cycle)
from .homology import (CycleClass, DynkinGraph, IntersectionForm,  # noqa: F401
                       PLOperator, condition_faca, condition_faca_bruteforce,
                       dynkin, intersection_matrix, monodromy_orbit_span,
                       picard_lefschetz)
from .periods import (FiberForm, PeriodValue, gm_derivative,   # noqa: F401
                      iterated_integral, numeric_monodromy_matrix, period,
                      restrict_to_fiber)
from .melnikov import (m1, m2_commutator_det,                  # noqa: F401
                       m2_commutator_iterated, melnikov_report)
from .holonomy import (HolonomyTask, leaf_transport,           # noqa: F401
                       holonomy_word, melnikov_fit, commutation_defect)
