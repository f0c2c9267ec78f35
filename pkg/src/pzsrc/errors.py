"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class PZError(Exception):
    exit_code = 1


class ConfigError(PZError, ValueError):
    """Invalid parameters or incompatible artifacts."""

    exit_code = 2


class DataError(PZError, ValueError):
    """Unreadable, missing or degenerate input data."""

    exit_code = 3


class NumericalError(PZError, ArithmeticError):
    """Non-finite values encountered during computation."""

    exit_code = 4
