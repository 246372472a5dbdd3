"""Exception hierarchy shared by all modules."""


class MultibumpError(Exception):
    """Base class; the CLI maps it to exit status 1."""


class ConfigInvalid(MultibumpError):
    """Raised for bad user input; the CLI maps it to exit status 2."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class QuadratureNotConverged(MultibumpError):
    pass


class StepTooLarge(MultibumpError):
    pass


class OrderingViolated(MultibumpError):
    pass


class WindowTooShort(MultibumpError):
    pass


class FitUnresolved(MultibumpError):
    pass


class ContinuationStalled(MultibumpError):
    pass


class BifurcationNotFound(MultibumpError):
    pass


class GridTooSmall(MultibumpError):
    pass


class SolverSingular(MultibumpError):
    pass


class ConstraintViolation(MultibumpError):
    pass


class ResonantRHS(MultibumpError):
    pass


class FundamentalMatrixIllConditioned(MultibumpError):
    pass


class OrthogonalityViolated(MultibumpError):
    pass


class DegenerateDenominator(MultibumpError):
    pass


class ContractionFailed(MultibumpError):
    pass


class Diverged(MultibumpError):
    pass


class PositivityLost(MultibumpError):
    pass


class BoundaryContaminated(MultibumpError):
    pass
