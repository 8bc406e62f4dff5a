"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not match what an operation requires."""


class NumericalError(ArithmeticError):
    """A computation produced NaN or infinity."""


class DataFormatError(ValueError):
    """A data file failed to parse.

    `offset` carries the byte offset for binary formats, `line` the
    1-based line number for text formats; either may be None.
    """

    def __init__(self, message, offset=None, line=None):
        super().__init__(message)
        self.offset = offset
        self.line = line


class ManifestError(ValueError):
    """A run manifest is missing fields or holds invalid values."""
