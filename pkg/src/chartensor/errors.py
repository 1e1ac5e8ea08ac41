"""Exception and warning types.

Errors are grouped by how the command-line front end reports them:
``DataError`` subclasses exit with status 3, ``NumericalError`` subclasses
with status 4.
"""


class ChartensorError(Exception):
    """Base class for all package errors."""


class DimensionError(ChartensorError, ValueError):
    """Array shapes or sizes are inconsistent."""


class DataError(ChartensorError):
    """Problems with the input data."""


class DegenerateColumnError(DataError, ValueError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column!r} is constant over its observed cells")


class InsufficientDataError(DataError, ValueError):
    pass


class InsufficientOverlapError(InsufficientDataError):
    def __init__(self, variables, count, min_count):
        self.variables = tuple(variables)
        self.count = count
        self.min_count = min_count
        super().__init__(
            f"variables {self.variables} are jointly observed in {count} rows "
            f"(need {min_count})"
        )


class UnsupportedDimensionError(DataError, ValueError):
    pass


class CoverageError(DataError, ValueError):
    pass


class NumericalError(ChartensorError, ArithmeticError):
    pass


class IllConditionedError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class DegenerateComponentError(NumericalError):
    pass


class ModelFormatError(ChartensorError, ValueError):
    """A model file could not be parsed or fails validation."""


class FitWarning(UserWarning):
    pass


class LowEvidenceWarning(UserWarning):
    """Conditioning density is numerically zero at the query point."""
