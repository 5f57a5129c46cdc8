"""Exception hierarchy shared by every tempcast module."""


class TempcastError(Exception):
    """Base class for all errors raised by tempcast."""


class ConfigError(TempcastError):
    """A requested column, key or option does not exist or is invalid."""


class ParseError(TempcastError):
    """A cell in an input file could not be parsed."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class EmptyInput(TempcastError):
    pass


class GapError(TempcastError):
    """Calendar months are missing inside the span of a series."""

    def __init__(self, missing):
        self.missing = list(missing)
        labels = ", ".join(f"{y:04d}-{m:02d}" for y, m in self.missing)
        super().__init__(f"missing months inside the span: {labels}")


class DegenerateSeries(TempcastError):
    """The series has zero variance where a non-constant one is required."""


class InsufficientData(TempcastError):
    pass


class ShapeError(TempcastError):
    pass


class NumericalError(TempcastError):
    pass


class FitDiverged(TempcastError):
    pass


class DomainError(TempcastError):
    """Model coefficients lie outside the admissible region."""


class StateError(TempcastError):
    pass


class DivergenceError(TempcastError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"non-finite training loss at epoch {epoch}")


class IoError(TempcastError):
    pass
