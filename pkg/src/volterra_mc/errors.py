"""Exception hierarchy shared by every module of the package."""


class VolterraError(Exception):
    """Base class for all library errors."""


class DomainError(VolterraError, ValueError):
    """Argument outside the region where a quantity is defined."""


class ParameterError(DomainError):
    """Model parameters violating their declared constraints."""


class DimensionError(VolterraError, ValueError):
    pass


class NotPSDError(VolterraError, ValueError):
    """Matrix has an eigenvalue below the allowed negative tolerance."""


class QuadratureError(VolterraError, ArithmeticError):
    pass


class NumericalBlowupError(VolterraError, ArithmeticError):
    """A simulated state left the configured magnitude cap."""


class EmptyBatchError(VolterraError, ValueError):
    pass


class InsufficientDataError(VolterraError, ValueError):
    pass


class GridMismatchError(VolterraError, ValueError):
    pass


class CouplingError(VolterraError, ValueError):
    pass


class ConfigError(VolterraError, ValueError):
    """Invalid or incomplete run configuration (CLI exit code 2)."""


# numerical failures the CLI maps to exit code 3
NUMERICAL_ERRORS = (NotPSDError, QuadratureError, NumericalBlowupError)
