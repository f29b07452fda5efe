"""Exception hierarchy shared by all solver modules."""


class AggregationError(Exception):
    """Base class for every error raised by this package."""


class InadmissibleParams(AggregationError, ValueError):
    pass


class DivergentIntegral(AggregationError, ArithmeticError):
    pass


class BadResolution(AggregationError, ValueError):
    pass


class ZeroMass(AggregationError, ValueError):
    pass


class DimensionMismatch(AggregationError, ValueError):
    pass


class GridMismatch(AggregationError, ValueError):
    pass


class QuadratureUnderResolved(AggregationError, ArithmeticError):
    pass


class NotApplicable(AggregationError, ValueError):
    pass


class BracketFailure(AggregationError, ArithmeticError):
    pass


class ResolutionTooLarge(AggregationError, ValueError):
    pass


class NoConvergence(AggregationError, ArithmeticError):
    """Iteration budget exhausted.

    ``result`` carries the best iterate when the caller can still use it.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DegenerateProfile(AggregationError, ArithmeticError):
    pass


class UnboundedSupport(AggregationError, ArithmeticError):
    """Support of the box minimizer keeps growing up to the radius cap."""

    def __init__(self, message, result=None, history=None):
        super().__init__(message)
        self.result = result
        self.history = history or []


class NoMinimizer(UnboundedSupport):
    """Support escape with no negative-energy profile found.

    Subclass of :class:`UnboundedSupport` so callers catching the generic
    escape also catch this case.
    """
