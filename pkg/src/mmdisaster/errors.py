"""Exception types raised across the package."""


class MMDisasterError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(MMDisasterError, ValueError):
    """Matrix or vector dimensions do not conform."""


class ConfigError(MMDisasterError, ValueError):
    """A configuration value violates its invariant."""


class DataFormatError(MMDisasterError, ValueError):
    """A dataset or checkpoint file could not be parsed.

    ``line`` is the 1-based line number when the problem is tied to one.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UndefinedMetricError(MMDisasterError, ValueError):
    """A metric has no defined value for the given inputs."""
