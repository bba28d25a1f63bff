"""Exception hierarchy shared by every corrmac module."""


class CorrmacError(Exception):
    """Base class for all errors raised by corrmac."""


class ContractViolation(CorrmacError, ValueError):
    """An input does not satisfy the documented preconditions."""


class NumericalFailure(CorrmacError, ArithmeticError):
    """An iterative routine failed to converge or lost accuracy.

    ``best`` optionally carries the best iterate found before giving up.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class NotPositiveDefinite(NumericalFailure):
    pass


class SingularMatrix(NumericalFailure):
    pass


class InfeasibleDimensions(ContractViolation):
    pass


class DegenerateChannel(ContractViolation):
    pass


class UnsupportedConfiguration(ContractViolation):
    pass


class ConfigError(CorrmacError, ValueError):
    """Malformed experiment configuration."""
