"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2, numeric failures exit 3.
"""


class ArbocastError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(ArbocastError):
    """Bad invocation: unknown option, missing argument, malformed config."""


class DataFormatError(ArbocastError, ValueError):
    """Input data violates its contract (bad CSV row, empty series, ...)."""


class NumericError(ArbocastError, ArithmeticError):
    """Numerical failure: non-finite gradient, exhausted resampling, ..."""
