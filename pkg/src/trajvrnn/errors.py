"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 1,
DataError -> 2, NumericError -> 3.
"""


class TrajvrnnError(Exception):
    """Base class for all package errors."""


class ShapeError(TrajvrnnError):
    """Operands have incompatible shapes; the message names both."""


class NumericError(TrajvrnnError):
    """A forward operation produced NaN or Inf."""


class ConfigError(TrajvrnnError):
    """Invalid configuration, unknown keys, or contract misuse."""


class CapacityError(ConfigError):
    """A sequence exceeds a configured capacity (e.g. agent count)."""


class DataError(TrajvrnnError):
    """Malformed data file or invalid input data."""
