"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: anything rooted at ValidationError is a
configuration/input failure (exit 2), ComputationError is a runtime failure
inside an otherwise valid run (exit 1).
"""


class SuncastError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(SuncastError):
    """Invalid argument, parameter, or input data."""


class OutOfRangeError(ValidationError):
    """Value outside the documented validity range (e.g. timestamp year)."""


class IngestionError(ValidationError):
    """Malformed or inconsistent input file; message names row/column."""


class PlanningError(ValidationError):
    """Rolling-window plan cannot be built from the available timeline."""


class ComputationError(SuncastError):
    """A computation failed despite valid inputs."""
