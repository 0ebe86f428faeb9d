"""Exception hierarchy shared by every teprog module."""


class TeprogError(Exception):
    """Base class for all library errors."""


class DomainError(TeprogError, ValueError):
    """A point lies outside the domain (or zone) an operation requires."""


class InvalidParameter(TeprogError, ValueError):
    pass


class NotStronglyConvex(TeprogError):
    """No certified strong-convexity parameter exists for a (geometry, set) pair."""


class NoBoundAvailable(TeprogError):
    """The smooth term has no Lipschitz-bound formula over the requested set."""


class NotFound(TeprogError):
    pass


class PreconditionViolation(TeprogError):
    pass


class ProxFailure(TeprogError):
    pass


class MaxInnerIterations(ProxFailure):
    """The inner prox solver did not reach its residual tolerance."""


class BacktrackOverflow(TeprogError):
    pass


class ReferenceInfeasible(TeprogError):
    pass


class DegenerateWindow(TeprogError):
    pass


class NumericalOverflow(TeprogError, ArithmeticError):
    """A finite, feasible input produced a non-finite objective value.

    Kept distinct from a legitimate ``+inf`` (point outside the constraint set).
    """
