"""Exception hierarchy shared by all modules."""


class EcmError(Exception):
    """Base class for simulator errors."""


class InvalidArgument(EcmError, ValueError):
    pass


class SingularElementError(EcmError):
    """Element with a non-positive Jacobian."""


class SetupError(EcmError):
    """Linear system cannot be formed (e.g. no Dirichlet constraints)."""


class SolverError(EcmError):
    """Linear solve did not reach the residual tolerance."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class ConfigurationError(EcmError):
    pass


class MeasurementError(EcmError):
    pass


class NoEquilibriumError(EcmError, ValueError):
    pass


class ParseError(EcmError, ValueError):
    pass


class StepError(EcmError):
    """Wraps an error raised inside the time loop with the step index."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause
