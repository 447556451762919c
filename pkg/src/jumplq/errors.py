"""Exception hierarchy shared by all modules.

Argument and validation problems derive from :class:`ValueError`; numerical
failures derive from :class:`SolverError`. The CLI maps the two families to
distinct exit codes.
"""


class JumpLQError(Exception):
    """Base class of every error raised by the package."""


class ValidationError(JumpLQError, ValueError):
    """Invalid argument, shape mismatch or malformed configuration."""


class InvariantViolationError(ValidationError):
    """Input violates a structural precondition (e.g. lost convexity)."""


class UnsupportedConeError(ValidationError):
    """Operation not available for the given cone variant."""


class CertificateError(ValidationError):
    """A comparison certificate is inconsistent with the instance pair."""


class InfeasibleError(ValidationError):
    """Mean-variance target cannot be reached by any admissible portfolio."""


class SolverError(JumpLQError, RuntimeError):
    """Numerical procedure failed."""


class ConvergenceError(SolverError):
    """Iteration limit reached before the stopping rule was met."""


class NumericError(SolverError):
    """Non-finite value produced during a computation."""


class SolverDivergenceError(SolverError):
    """Computed solution violates its a-priori bounds."""


class StepSizeError(SolverError):
    """Time step too coarse for the fixed-point iteration to contract."""


class CapacityError(SolverError):
    """Lattice node table would exceed the memory budget."""


class DegenerateMarketError(SolverError):
    """Riccati value at time zero contradicts the strict frontier inequality."""


class BlowUpError(SolverError):
    """Simulated state became non-finite."""

    def __init__(self, message, path=None, step=None):
        super().__init__(message)
        self.path = path
        self.step = step
