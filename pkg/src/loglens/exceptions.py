"""Exception types shared across the toolkit."""


class LoglensError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(LoglensError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ConfigurationError(LoglensError, ValueError):
    """A configuration value is invalid or inconsistent."""


class TrainingError(LoglensError, RuntimeError):
    """Training cannot proceed (empty data, missing gradient, single class)."""


class FormatError(LoglensError, ValueError):
    """An input file does not match its declared format."""


class StateError(LoglensError, RuntimeError):
    """A detector is used before the required fitted state exists."""
