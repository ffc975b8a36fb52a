"""Exception hierarchy shared by every module."""


class ContractionLabError(Exception):
    pass


class ConfigurationError(ContractionLabError, ValueError):
    pass


class DomainError(ContractionLabError, ValueError):
    pass


class EstimationError(ContractionLabError, ValueError):
    pass


class NumericError(ContractionLabError, ArithmeticError):
    """Non-finite value encountered.

    Attributes:
        index: offending sample index (data row) or step index, when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ChainAbort(NumericError):
    """A chain produced a non-finite state."""

    def __init__(self, message, step, last_state):
        super().__init__(message, index=step)
        self.step = step
        self.last_state = last_state


class RateEquationError(DomainError):
    pass
