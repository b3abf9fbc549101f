class CCSError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(CCSError, ValueError):
    """A parameter or input is outside its allowed domain."""


class BudgetError(CCSError):
    """An exhaustive enumeration would exceed its configured budget."""


class FormatError(CCSError, ValueError):
    """A matrix, signal or config file could not be parsed."""
