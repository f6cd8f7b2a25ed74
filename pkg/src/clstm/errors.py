class ShapeError(ValueError):
    """Array shapes are incompatible for the requested operation."""


class ParseError(ValueError):
    """Malformed input text or binary file.

    ``offset`` is the byte offset where the problem was detected.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(RuntimeError):
    """Training produced a non-finite loss."""


class CheckpointError(ValueError):
    """Checkpoint file is corrupt or has an unsupported version."""
