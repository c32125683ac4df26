"""Exception hierarchy shared by every module of the package."""


class NEPJError(Exception):
    """Base class for all errors raised by :mod:`nepj_admm`."""


class DimensionMismatch(NEPJError, ValueError):
    pass


class InvalidProblem(NEPJError, ValueError):
    pass


class InvalidGenerator(NEPJError, ValueError):
    pass


class ZeroOperator(NEPJError, ValueError):
    pass


class ThetaOutOfRange(NEPJError, ValueError):
    pass


class InfeasibleDeltas(NEPJError):
    pass


class InfeasibleForBeta(NEPJError):
    """No admissible ``m_p`` exists for the requested penalty.

    Attributes:
        beta: the penalty that was tried.
        beta_min: smallest penalty above which the ``m_p`` window opens.
    """

    def __init__(self, message, beta=None, beta_min=None):
        super().__init__(message)
        self.beta = beta
        self.beta_min = beta_min


class InfeasibleParams(NEPJError):
    pass


class MissingLowerBound(NEPJError):
    pass


class SingularSystem(NEPJError):
    pass


class NoClosedForm(NEPJError):
    pass


class InnerSolverFailure(NEPJError):
    pass


class UncertifiedRun(NEPJError):
    pass
