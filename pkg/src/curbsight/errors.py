"""Exception hierarchy.

Every error raised on bad input derives from :class:`InputError` so the CLI can
map it to exit code 1; anything else is treated as an internal failure.
"""

from __future__ import annotations


class InputError(ValueError):
    """Invalid or unusable input data."""


class InvalidInputError(InputError):
    pass


class DegenerateProjectionError(InputError):
    pass


class OutOfBoundsError(InputError):
    pass


class InvalidDistanceError(InputError):
    pass


class GeometryInfeasibleError(InputError):
    pass


class InsufficientObservationsError(InputError):
    pass


class IncompleteObservationError(InputError):
    pass


class CannotSplitError(InputError):
    pass


class NoUsableFramesError(InputError):
    pass


class OutOfCoverageError(InputError):
    pass


class ConfigError(InputError):
    pass


class ControlPointError(InputError):
    pass


class ParseError(InputError):
    """Schema violation in an input file, located by file, line and field."""

    def __init__(self, path, line: int | None, field: str | None, message: str):
        self.path = str(path)
        self.line = line
        self.field = field
        where = self.path
        if line is not None:
            where += f":{line}"
        if field is not None:
            where += f" [{field}]"
        super().__init__(f"{where}: {message}")
