"""Exception types raised by the solver and the verification harness."""


class ConfigError(ValueError):
    """Invalid tank, grid or run configuration."""


class NumericalError(RuntimeError):
    """Base class for failures of the numerical pipeline.

    ``stage`` names the part of the pipeline that failed so the CLI can
    report it.
    """

    stage = "numerics"


class AdmissibilityError(NumericalError):
    """The surface elevation does not define a valid flattening map."""

    stage = "flattening"


class EllipticSolveError(NumericalError):
    """The harmonic-extension solve did not reach its tolerance."""

    stage = "elliptic-solve"

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class InstabilityError(NumericalError):
    """NaN or Inf appeared during time stepping."""

    stage = "time-integration"

    def __init__(self, message, step_index):
        super().__init__(message)
        self.step_index = step_index
