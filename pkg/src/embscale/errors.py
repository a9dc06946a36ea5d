"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input value violates a documented invariant; message names the field."""


class FormatError(ValueError):
    """A file could not be parsed; carries the byte offset of the failure."""

    def __init__(self, message: str, byte_offset: int | None = None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class InsufficientDataError(ValueError):
    """Too few records to carry out the requested computation."""


class FitFailureError(RuntimeError):
    """Every optimizer start diverged; message lists the inits tried."""


class UnsupportedModeError(RuntimeError):
    """The requested planning mode is not available with the given artifacts."""
