"""Exception types shared across the package.

The command line maps ``ValidationError`` to exit code 2 and
``NumericalAbort`` to exit code 3.
"""


class ValidationError(ValueError):
    """Bad input: parameters, shapes or configuration that violate a contract."""


class DimensionMismatchError(ValidationError):
    """An operator does not fit the factor it is being placed on."""

    def __init__(self, message, *, site=None, expected=None, got=None):
        super().__init__(message)
        self.site = site
        self.expected = expected
        self.got = got


class NumericalAbort(RuntimeError):
    """A numerical routine detected that its result can no longer be trusted."""

    def __init__(self, message, *, partial=None):
        super().__init__(message)
        self.partial = partial
