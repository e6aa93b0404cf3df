"""Exception types shared across the package."""


class GridcastError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(GridcastError, ValueError):
    """Operands have incompatible or invalid shapes."""


class NumericError(GridcastError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class DataError(GridcastError, ValueError):
    """Malformed dataset input (bad cell, ragged row, too-short split)."""


class ConfigError(GridcastError, ValueError):
    """Invalid configuration value; message names the offending field."""


class DivergenceError(GridcastError, RuntimeError):
    """Training produced a non-finite loss."""
