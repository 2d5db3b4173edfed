"""Exception hierarchy shared by all modules."""


class SpectraForgeError(Exception):
    """Base class for every error raised by the package."""


class DegenerateFieldError(SpectraForgeError, ZeroDivisionError):
    """A field collapsed (division by a zero value, Rayleigh denominator below floor)."""


class NonFiniteError(SpectraForgeError, FloatingPointError):
    """A NaN or Inf appeared in a loss, gradient or node payload."""


class TapeError(SpectraForgeError, ValueError):
    """Misuse of a ParamTape (cross-tape input, mode mixing, duplicate leaf)."""


class GeometryError(SpectraForgeError, ValueError):
    """Unsupported domain operation or inconsistent geometric data."""


class ConfigError(SpectraForgeError, ValueError):
    """Run configuration failed validation."""


class ConvergenceError(SpectraForgeError, RuntimeError):
    """An iterative solver did not converge within its iteration budget."""
