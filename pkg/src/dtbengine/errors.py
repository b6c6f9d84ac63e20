"""Exception hierarchy shared across the engine.

The CLI maps EngineError subclasses to exit code 1 and OSError to exit
code 2; the HTTP layer maps NotFoundError to 404 and the rest to 400.
"""


class EngineError(Exception):
    """Base class for all engine-level errors."""


class FormatError(EngineError):
    """Input file violates its format or a data invariant."""


class NotFoundError(EngineError):
    """Requested label, voxel, dataset, or session does not exist."""


class BoundsError(EngineError):
    """Index outside the valid range (e.g. time index >= T)."""


class ShapeError(EngineError):
    """Mismatched shapes between two datasets (e.g. different T)."""


class DegenerateInputError(EngineError):
    """Input is structurally valid but degenerate for the operation
    (all-zero matrix, zero-length segment)."""


class SpecError(EngineError):
    """Generator spec is infeasible (e.g. more edges requested than
    distinct voxel pairs exist)."""
