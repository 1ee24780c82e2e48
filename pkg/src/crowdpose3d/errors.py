"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value (bad joint set name, probability out of range, ...)."""


class ShapeMismatchError(ValueError):
    """Array shapes violate an operation's contract."""


class DegeneratePoseError(ValueError):
    """A 2D pose has too few confident joints to derive a bounding box."""


class AlignmentError(ValueError):
    """Procrustes alignment is undefined (too few or collinear points)."""


class SampleParseError(ValueError):
    """A serialized sample or model file is corrupt.

    ``offset`` is the byte offset at which parsing failed, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedVersionError(SampleParseError):
    """A serialized file declares a format version this code does not read."""
