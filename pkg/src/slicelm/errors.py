"""Exception hierarchy shared across the package."""


class SliceLMError(Exception):
    """Base class for all slicelm errors."""


class DataError(SliceLMError):
    """Malformed or inconsistent input data."""


class MrpParseError(DataError):
    """Graph line is not valid JSON. Carries the byte position if known."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class SchemaError(DataError):
    """A required field is missing or references a nonexistent object."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NotATreeError(DataError):
    pass


class EmptyGraphError(DataError):
    pass


class TokenizerTableError(DataError):
    pass


class VocabularyError(DataError):
    pass


class AlignmentError(DataError):
    pass


class ConfigError(SliceLMError):
    """Invalid configuration (dimension mismatch, bad paths, bad options)."""


class NumericError(SliceLMError):
    """Non-finite values where finite ones are required."""
