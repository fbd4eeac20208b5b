"""Exception hierarchy shared by all modules."""


class VolterraError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(VolterraError, ValueError):
    pass


class InvalidModel(VolterraError, ValueError):
    pass


class InvalidGrid(VolterraError, ValueError):
    pass


class InvalidRule(VolterraError, ValueError):
    pass


class InsufficientData(VolterraError, ValueError):
    pass


class IndistinguishableHypotheses(VolterraError, ValueError):
    pass


class UnboundedBound(VolterraError, ValueError):
    """The measurement does not constrain every estimated parameter."""


class IllConditionedMoments(VolterraError, ArithmeticError):
    """A moment matrix could not be factorised, even after regularisation.

    Attributes
    ----------
    rcond : float
        Reciprocal condition estimate of the offending matrix (0 when the
        factorisation broke down before an estimate was available).
    """

    def __init__(self, message: str, rcond: float = 0.0):
        super().__init__(f"{message} (rcond estimate {rcond:.3e})")
        self.rcond = rcond
