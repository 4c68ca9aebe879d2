"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class EchoPipeError(Exception):
    exit_code = 1


class UsageError(EchoPipeError, ValueError):
    exit_code = 2


class ShapeError(EchoPipeError, ValueError):
    """Incompatible tensor or layer shapes."""

    exit_code = 2


class DataError(EchoPipeError):
    """Missing, malformed or inconsistent input data (files, manifests, masks)."""

    exit_code = 3


class FormatError(DataError):
    """Bad magic, truncated payload or malformed header in an ECHO/MDLW file."""


class EmptyMaskError(DataError):
    pass


class NumericError(EchoPipeError, ArithmeticError):
    """NaN/Inf encountered, or training diverged."""

    exit_code = 4
