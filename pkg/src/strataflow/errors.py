"""Exception types shared across the solver stages."""

from __future__ import annotations


class StrataflowError(Exception):
    """Base class for all solver errors."""


class ProfileError(StrataflowError):
    """Profile data rejected at construction (positivity/monotonicity)."""


class ConfigError(StrataflowError):
    """Malformed run configuration. Carries a line/column position."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"line {line}, col {col}: {message}" if line else message)
        self.line = line
        self.col = col


class LambdaRangeError(StrataflowError):
    """Requested laminar parameter outside the admissible range."""


class NoBedReached(StrataflowError):
    """Laminar integrator exhausted its budget before p reached p0."""


class NonMonotone(StrataflowError):
    """dp/ds lost positivity during the laminar solve (corrupt profiles)."""


class NoMinimumInRange(StrataflowError):
    """Q(lambda) still decreasing at the right end of the search range."""


class DegenerateDenominator(StrataflowError):
    """Rayleigh-quotient denominator is not positive at this lambda."""


class LBViolated(StrataflowError):
    """No admissible lambda with mu(lambda) < -1 was found on the sweep."""


class StagnationGuard(StrataflowError):
    """h_p lost positivity; the model requires u < c everywhere."""


class NoConvergence(StrataflowError):
    """Newton iteration exceeded its budget."""


class SingularJacobian(StrataflowError):
    """Linear solve failed (singular or numerically singular system)."""


class StepFailure(StrataflowError):
    """Continuation step size underflowed ds_min without convergence."""


class InvalidField(StrataflowError):
    """A field snapshot violates a structural invariant (e.g. h != 0 on B)."""


class MonitorStop(StrataflowError):
    """A global-bifurcation alternative triggered; carries the status."""

    def __init__(self, status):
        super().__init__(f"monitor stop: {status.reason}")
        self.status = status
