"""Exception types raised across the library."""


class PlanefolError(Exception):
    """Base class for all library errors."""


# algebra
class NonIsolatedCriticalLocus(PlanefolError):
    """gcd(f_x, f_y) is nonconstant: the critical locus has positive dimension."""


class RootSolveFailure(PlanefolError):
    """Simultaneous root iteration failed to converge within its budget."""


class BoundsTooSmall(PlanefolError):
    """Relative-exactness bounds appear too small (heuristic signal only)."""


# fibration
class BasePointTooClose(PlanefolError):
    """Base point too close to a critical value, or critical values degenerate."""


class UnresolvableCrossing(PlanefolError):
    """Distinguished paths could not be disentangled within the detour budget."""


class LabelAmbiguity(PlanefolError):
    """Branch-point labels became ambiguous: roots closer than the tracking resolution."""


class ClearanceFailure(PlanefolError):
    """No admissible ellipse around the colliding pair clears the other branch points."""


class StepUnderflow(PlanefolError):
    """Adaptive step size underflowed (near-singular geometry on the path)."""


# homology
class AmbiguousCrossing(PlanefolError):
    """Signed crossing sum not close enough to an integer; sampling too coarse."""


class DepthExhausted(PlanefolError):
    """Monodromy orbit closure hit its depth bound (rank so far is attached)."""


class SizeLimit(PlanefolError):
    """Brute-force enumeration box exceeds the configured budget."""


# periods
class PoleOnPath(PlanefolError):
    """Integration loop passes too close to a pole of the form."""


class ToleranceNotMet(PlanefolError):
    """Quadrature refinement budget exhausted before reaching the tolerance."""


class IllConditionedPeriodMatrix(PlanefolError):
    """Period matrix of the chosen form basis is numerically singular."""


class DegenerateRatio(PlanefolError):
    """Ratio probe denominator period vanishes at the base point."""


# holonomy
class DenominatorSmall(PlanefolError):
    """|eps * omega(dZ/dt)| exceeded the divergence guard: eps too large."""


class IllConditionedFit(PlanefolError):
    """Epsilon-expansion fit is ill conditioned (bad epsilon list)."""


# cli
class ConfigError(PlanefolError):
    """Scenario config invalid; carries the full list of diagnostics."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
