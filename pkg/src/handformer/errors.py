"""Exception hierarchy shared across the package.

DataError maps to CLI exit code 3, NumericsError to exit code 4.
"""


class HandFormerError(Exception):
    """Base class for all package errors."""


class DataError(HandFormerError):
    """Malformed or inconsistent input data."""


class MalformedHeaderError(DataError):
    code = "malformed header"


class ExtentMismatchError(DataError):
    code = "extent mismatch"


class NonFiniteValueError(DataError):
    code = "non-finite values"


class NumericsError(HandFormerError):
    """Numerical failure: NaN loss, degenerate attention, gradcheck failure."""
