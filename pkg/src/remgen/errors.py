"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: input/validation problems exit 2,
runtime/numeric failures exit 3.
"""


class RemgenError(Exception):
    """Base class for all toolkit errors."""


class ScenarioFormatError(RemgenError):
    """Malformed input file; message carries file and field/line context."""


class ValidationError(RemgenError):
    """Structurally valid input violating a model invariant."""


class OutOfBoundsError(RemgenError):
    """Query outside the supported spatial extent."""


class DegeneratePathError(RemgenError):
    """Transmitter and receiver coincide."""


class InsufficientDataError(RemgenError):
    """Too few records to perform the requested computation."""


class MissingPrerequisiteError(RemgenError):
    """A pipeline stage ran before its inputs were fitted/produced."""


class CheckpointError(RemgenError):
    """Unreadable, truncated, or inconsistent model checkpoint."""


class NumericError(RemgenError):
    """Non-finite value produced; message identifies the layer/stage."""


class TrainingError(RemgenError):
    """Training diverged or could not proceed."""
