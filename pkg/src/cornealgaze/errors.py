"""Exception hierarchy.

``ConfigError`` maps to CLI exit code 2, every ``DataError`` to exit code 3.
"""


class GazeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GazeError, ValueError):
    """Bad parameters, unknown config keys, unmet preconditions on settings."""


class DomainError(GazeError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DataError(GazeError):
    """Input data could not be processed."""


class GeometryError(DataError):
    """The requested configuration is not physically realizable."""


class NumericError(DataError):
    """An iterative solver failed to converge."""


class ParseError(DataError):
    """Malformed file contents; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NoEllipseFound(DataError):
    """The Hough search found no ellipse with enough support."""


class TrackingLost(DataError):
    """The tracker has seen too many consecutive uninformative frames."""


class CropNotFound(DataError):
    """Template matching peak is below the acceptance threshold."""
