class RecomposeError(Exception):
    """Base class for user-facing errors (bad input, exhausted retrieval)."""


class MonophonyError(RecomposeError, ValueError):
    pass


class MidiError(RecomposeError, ValueError):
    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DatabaseFormatError(RecomposeError, ValueError):
    pass


class ModelFormatError(RecomposeError, ValueError):
    pass


class LyricError(RecomposeError, ValueError):
    pass


class RetrievalError(RecomposeError):
    """No fragment satisfies a line's key even after every relaxation."""
