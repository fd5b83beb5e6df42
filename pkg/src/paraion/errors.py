"""Exception and warning types shared by the package."""


class ParaionError(Exception):
    """Base class for all errors raised by paraion."""


class InvalidArgumentError(ParaionError, ValueError):
    """An input violated a documented precondition."""


class SpaceMismatchError(InvalidArgumentError):
    """Two objects live on different truncated spaces."""


class NumericalError(ParaionError, RuntimeError):
    """A numerical procedure failed (step-size failure, lost normalization, ...)."""

    def __init__(self, message, time_reached=None):
        super().__init__(message)
        self.time_reached = time_reached


class LeakageError(NumericalError):
    """Truncation leakage exceeded the threshold in strict mode."""


class LeakageWarning(UserWarning):
    """Population reached the top Fock levels of a truncated mode."""


class IllConditionedWarning(UserWarning):
    """The fit design matrix is badly conditioned."""
