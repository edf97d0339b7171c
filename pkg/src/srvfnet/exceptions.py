"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Array lengths or shapes do not agree."""


class DegenerateInputError(ValueError):
    """Input has no usable direction (zero derivative, zero mean, zero velocity)."""


class PreconditionError(ValueError):
    """An argument violates a documented precondition (e.g. not unit norm)."""


class NumericError(FloatingPointError):
    """A non-finite value appeared during a forward or backward pass.

    ``where`` names the layer or graph node that produced it.
    """

    def __init__(self, message, where=None):
        super().__init__(message if where is None else f"{message} (at {where})")
        self.where = where


class CsvFormatError(ValueError):
    """A CSV row could not be parsed."""

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row
