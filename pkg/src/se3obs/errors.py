"""Error taxonomy shared across the package.

Input-contract violations raise before any state is touched; numerical and
runtime failures carry enough context to be reported by the CLI as a
machine-readable record.
"""


class SE3ObsError(Exception):
    """Base class for all package errors."""


class AssumptionViolated(SE3ObsError):
    """Scene/measurement configuration breaks an observability assumption."""


class NumericalFailure(SE3ObsError):
    """An iterative numerical routine failed to converge to tolerance."""


class GapInfeasible(SE3ObsError):
    """Requested jump threshold is incompatible with the scene's gap bound."""


class PreconditionFailed(SE3ObsError):
    """An operation was called with arguments violating its contract."""


class DivergenceDetected(SE3ObsError):
    """A simulation left the trust region (error blow-up or jump chatter)."""

    def __init__(self, message, t=None, observer=None):
        super().__init__(message)
        self.t = t
        self.observer = observer


class ParseError(SE3ObsError):
    """Config file is syntactically malformed (carries a line number)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(SE3ObsError):
    """Config file parsed but the values are inconsistent or out of range."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
