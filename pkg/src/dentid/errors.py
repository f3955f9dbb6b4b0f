"""Exception types raised across the package."""


class DecodeError(ValueError):
    """An image file exists but could not be decoded."""

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
        self.reason = reason


class DimensionError(ValueError):
    """An image is too small for the requested operation."""


class ParameterError(ValueError):
    """A numeric parameter is outside its valid range."""


class IndexFormatError(ValueError):
    """A gallery index file is malformed."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UsageError(ValueError):
    """An operation was called in a state where it cannot run."""
