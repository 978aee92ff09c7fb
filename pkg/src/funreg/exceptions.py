"""Exception hierarchy shared by all modules.

Each class carries an ``exit_code`` used by the command line front end.
"""


class FunregError(Exception):
    exit_code = 1


class ConfigError(FunregError, ValueError):
    """Invalid configuration, specification or argument."""

    exit_code = 1


class DataError(FunregError, ValueError):
    """Malformed input data (grid mismatch, bad CSV, ...)."""

    exit_code = 2


class GridMismatchError(DataError):
    pass


class NumericError(FunregError, ArithmeticError):
    """A computation could not produce a finite, meaningful result."""

    exit_code = 3


class EmptyNeighborhoodError(NumericError):
    """No covariate receives kernel mass; the bandwidth is too small."""


class NormDivergenceError(NumericError):
    """Orlicz norm bracket search left the representable range."""
