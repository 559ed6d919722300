"""Exception types shared across the package."""


class ActivenasError(Exception):
    """Base class for errors raised by this package."""


class DataError(ActivenasError):
    """Malformed input data: bad files, shape mismatches, empty sets."""


class ConfigError(ActivenasError):
    """Invalid configuration or parameter values."""


class TrainingDivergedError(ActivenasError):
    """Training produced a non-finite loss; the run cannot be trusted."""
