"""Exceptions and warnings raised across the package."""


class StandingWave(ValueError):
    """kD/pi + 1/2 is an integer, so one mode sits exactly at cutoff."""


class OutOfDomain(ValueError):
    """A depth coordinate lies outside [0, D]."""


class NegativeSpectrum(ValueError):
    """The discretized covariance has negative spectral weights."""


class GridMismatch(ValueError):
    """Arrays defined on incompatible cross-range grids."""


class StepTooLarge(ValueError):
    """Range step violates the configured phase bounds."""


class InsufficientRealizations(ValueError):
    """Too few realizations for a statistic."""


class RegimeUnsupported(ValueError):
    """Requested moment pattern or regime has no closed form here."""


class QueryMismatch(ValueError):
    """Empirical and theoretical queries do not line up."""


class DegenerateFit(ValueError):
    """Misfit is flat, the parameter is not identifiable."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class ValidityWarning(UserWarning):
    """An asymptotic validity condition of a closed form is not met."""


class BranchWarning(UserWarning):
    """Evaluation close to a branch point or pole of a complex function."""


class WindowTooWide(UserWarning):
    """CINT frequency window exceeds a decoherence frequency."""


class ConfigError(ValueError):
    """Invalid scenario entry; ``path`` is the dotted key."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
