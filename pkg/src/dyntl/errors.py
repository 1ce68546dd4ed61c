"""Exception hierarchy shared by every module."""


class DyntlError(Exception):
    """Base class for all package errors."""


class ConfigError(DyntlError, ValueError):
    pass


class ShapeError(DyntlError, ValueError):
    pass


class DataError(DyntlError, ValueError):
    pass


class NumericalError(DyntlError, ArithmeticError):
    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


class StateError(DyntlError, RuntimeError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FormatError(DyntlError, ValueError):
    pass


class StageError(DyntlError, RuntimeError):
    """A pipeline stage failed; carries the stage name and pair index."""

    def __init__(self, stage, pair_index, cause):
        super().__init__(f"stage {stage!r} (pair {pair_index}) failed: {cause}")
        self.stage = stage
        self.pair_index = pair_index
        self.cause = cause
