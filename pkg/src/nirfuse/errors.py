"""Exception taxonomy shared across the package.

The command line tool maps these onto distinct exit codes, so library code
should raise the most specific class that applies.
"""


class ArgumentError(ValueError):
    """An argument violated a documented precondition (wrong shape, range, kind)."""


class ImageIOError(OSError):
    """A file could not be read, written, or parsed."""


class NumericError(ArithmeticError):
    """A numeric routine produced non-finite state or failed to make progress."""
