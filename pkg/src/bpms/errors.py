"""Exception hierarchy shared by every module of the package."""


class BpmsError(Exception):
    """Base class for all errors raised by :mod:`bpms`."""


class ConfigError(BpmsError, ValueError):
    """A configuration document could not be parsed or violates an invariant."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DegenerateGeometryError(BpmsError, ValueError):
    """Two scenario points coincide (distance below 1e-9 m)."""


class DimensionError(BpmsError, ValueError):
    """Matrix or vector operands have non-conformable shapes."""


class IllPosedBoundError(BpmsError, ArithmeticError):
    """A Fisher information block is singular or too ill-conditioned to invert.

    No regularization is attempted: a regularized CRB is not a bound.
    """

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class SolverError(BpmsError, RuntimeError):
    """An optimizer failed to produce a usable solution."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class RankOneError(SolverError):
    """A lifted trust-region block did not come back rank one."""

    def __init__(self, message, ratio, report=None):
        super().__init__(message, report)
        self.ratio = ratio


class DecompositionError(BpmsError, ValueError):
    """A covariance matrix cannot be factored into the requested number of beams."""
