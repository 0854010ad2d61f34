"""Exception and warning classes raised across the package."""


class BrokenRayError(Exception):
    """Base class for all package errors."""


class QuadratureError(BrokenRayError, ArithmeticError):
    """A non-finite integrand value was met during quadrature."""


class TraceError(BrokenRayError):
    """Base class for ray tracing failures."""


class TangentialHit(TraceError):
    pass


class TipHit(TraceError):
    """The ray passes through (or too close to) the apex or a corner."""


class MaxReflectionsExceeded(TraceError):
    pass


class InvalidOrbit(BrokenRayError):
    pass


class DegenerateOrbit(BrokenRayError):
    pass


class OutsideUnfolding(BrokenRayError):
    """Point is the apex or lies in the filler cone."""


class LineError(BrokenRayError):
    """Base class for lines that cannot be folded into a broken ray."""


class ApexLine(LineError):
    pass


class FillerConeHit(LineError):
    pass


class EmptyIntersection(LineError):
    pass


class DegenerateGeometry(BrokenRayError):
    pass


class IncompleteSinogram(BrokenRayError):
    pass


class NonEvenData(BrokenRayError):
    pass


class InvalidNullProfile(BrokenRayError):
    pass


class UnderdeterminedProbe(BrokenRayError):
    pass


class SymmetryError(BrokenRayError):
    """A phantom failed verification of its declared symmetry class."""


class ConfigError(BrokenRayError):
    pass


class SlowConvergence(UserWarning):
    pass
