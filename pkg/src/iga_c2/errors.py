"""Exception types raised across the package."""


class IGAError(Exception):
    """Base class for all errors raised by iga_c2."""


class InvalidParameterError(IGAError, ValueError):
    pass


class OutOfDomainError(IGAError, ValueError):
    pass


class RepresentationError(IGAError):
    """A function could not be represented exactly in the requested spline space."""


class DomainFileError(IGAError, ValueError):
    pass


class ConvexityError(IGAError, ValueError):
    pass


class EdgeMatchingError(IGAError, ValueError):
    """Patches overlap partially along an edge."""


class TJunctionError(EdgeMatchingError):
    pass


class TopologyError(IGAError):
    pass


class DegenerateGeometryError(IGAError, ValueError):
    pass


class NotFoundError(IGAError):
    pass


class InvalidInterfaceError(IGAError):
    pass


class RankAmbiguityError(IGAError):
    pass


class UnsupportedRefinementError(IGAError):
    pass


class IterativeFailureError(IGAError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class NotSPDError(IGAError):
    pass


class EstimationFailureError(IGAError):
    pass


class UndefinedRelativeError(IGAError, ZeroDivisionError):
    pass
