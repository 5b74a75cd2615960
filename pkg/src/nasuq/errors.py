"""Exception hierarchy shared across the package."""


class NasuqError(Exception):
    """Base class for all package errors."""


class SpecError(NasuqError, ValueError):
    """A network or search-space description violates its invariants."""


class ConfigError(NasuqError, ValueError):
    """A run or search configuration is invalid."""


class DomainError(NasuqError, ValueError):
    """An argument lies outside the domain of an operation."""


class NumericError(NasuqError, ArithmeticError):
    """Non-finite values appeared during a forward or backward pass.

    ``layer`` is the node index where the problem was detected (0 is the
    input node, ``len(spec.layers) + 1`` is the output head), or ``None``
    when it cannot be attributed.
    """

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class FormatError(NasuqError, ValueError):
    """A binary file has the wrong magic, header, or size."""
