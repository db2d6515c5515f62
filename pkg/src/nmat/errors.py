"""Exception types raised across the package."""


class NMatError(Exception):
    """Base class for all errors raised by nmat."""


class InvalidArgument(NMatError, ValueError):
    pass


class NonFinite(InvalidArgument):
    pass


class NonPositiveDensity(NMatError):
    pass


class InversionFailure(NMatError):
    pass


class OutOfDomain(NMatError, ValueError):
    pass


class InvalidSurfacePoint(NMatError, ValueError):
    pass


class DegenerateSpectrum(NMatError):
    pass


class ThetaNonPositive(NMatError):
    """theta lost positivity on the unit circle."""

    def __init__(self, message, theta_min=None):
        super().__init__(message)
        self.theta_min = theta_min


class BoundaryBreakdown(NMatError):
    """The support stopped being a smooth simply connected domain."""

    def __init__(self, message, residuals=None, t=None):
        super().__init__(message)
        self.residuals = residuals
        self.t = t


class NoConvergence(NMatError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class EvaluationOverflow(NMatError):
    pass


class NoRealRoot(NMatError):
    pass


class RootInsideDisk(NMatError, ValueError):
    pass


class SelfIntersection(NMatError):
    """Boundary polyline is not simple; the offending curve is attached."""

    def __init__(self, message, curve=None):
        super().__init__(message)
        self.curve = curve


class QuadratureFailure(NMatError):
    pass


class PoleProximity(NMatError):
    pass


class EmptyInput(NMatError, ValueError):
    pass


class CheckpointCorrupt(NMatError):
    pass
