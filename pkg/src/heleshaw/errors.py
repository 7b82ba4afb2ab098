"""Exception hierarchy shared by all modules."""


class HeleShawError(Exception):
    """Base class for all package errors."""


class GeometryError(HeleShawError):
    """Scenario or grid cannot be turned into an admissible initial domain."""


class NotConnected(GeometryError):
    def __init__(self, count):
        super().__init__(f"fluid set splits into {count} components")
        self.count = count


class StripViolation(GeometryError):
    pass


class GridMismatch(HeleShawError, ValueError):
    pass


class SolverError(HeleShawError):
    """Numerical failure; ``t`` is filled in when raised from a time sweep."""

    t = None


class DepthTooShallow(SolverError, ValueError):
    pass


class NotConverged(SolverError):
    """Iteration budget exhausted. The best iterate is kept on ``result``."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NonFiniteValue(SolverError):
    pass


class TooLarge(SolverError, ValueError):
    pass


class NoFeasibleActiveSet(SolverError):
    pass


class NotAGraph(HeleShawError):
    def __init__(self, column):
        super().__init__(f"column {column} is not a contiguous range from the bottom")
        self.column = column


class DimensionUnsupported(HeleShawError, ValueError):
    pass


class BallTooSmall(HeleShawError, ValueError):
    pass
