"""Exception types raised across the package."""


class SubunitError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(SubunitError, ValueError):
    """A dimension argument is out of range or inconsistent."""


class InvalidChannelError(SubunitError, ValueError):
    """A channel fails complete positivity or trace preservation."""


class InvalidInputError(SubunitError, ValueError):
    """An argument violates an operation's precondition."""


class UnsupportedError(SubunitError, NotImplementedError):
    """The operation is not defined for the given arguments."""


class NumericalDomainError(SubunitError, ArithmeticError):
    """A quantity left its mathematical domain beyond tolerance."""


class FitError(SubunitError, RuntimeError):
    """A fit could not produce a usable estimate."""
