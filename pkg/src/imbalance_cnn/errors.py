"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    pass


class InvalidState(RuntimeError):
    pass


class ShapeError(ValueError):
    pass


class DataError(ValueError):
    """Problem with a corpus, a file on disk, or its contents."""


class FormatError(DataError):
    """Malformed file; ``offset`` is the byte position where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DivergenceError(ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, batch, value):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.value = value
