"""Exception and warning types raised across the package."""


class InvMetricError(Exception):
    """Base class for all package errors."""


class InvalidDomain(InvMetricError):
    pass


class AmbiguousComponent(InvMetricError):
    pass


class OutsideDomain(InvMetricError):
    pass


class EmptySample(InvMetricError):
    pass


class InvalidAutomorphism(InvMetricError):
    pass


class InvalidGroup(InvMetricError):
    pass


class NumericalBreakdown(InvMetricError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class KernelZero(InvMetricError):
    pass


class InvalidInput(InvMetricError):
    pass


class OutsideTube(InvMetricError):
    pass


class ProjectionBreakdown(InvMetricError):
    pass


class GridTooCoarse(InvMetricError):
    pass


class Unreachable(InvMetricError):
    pass


class InsufficientPoints(InvMetricError):
    pass


class PathExited(InvMetricError):
    """The geodesic left the domain before reaching the requested length.

    The partial path is kept on ``self.path``.
    """

    def __init__(self, message, path):
        super().__init__(message)
        self.path = path


class ConfigError(InvMetricError):
    pass


class TruncationWarning(UserWarning):
    pass


class StencilClipped(UserWarning):
    pass


class ExperimentalWarning(UserWarning):
    pass
