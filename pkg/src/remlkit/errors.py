"""Exception hierarchy shared across remlkit."""


class RemlkitError(Exception):
    """Base class for all remlkit errors."""


class DataError(RemlkitError, ValueError):
    """Malformed or degenerate input data."""


class RankDeficientError(DataError):
    """The fixed-effect design matrix X does not have full column rank."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class NotPositiveDefiniteError(RemlkitError, ArithmeticError):
    """A nonpositive pivot was met during LDL^T factorization."""

    def __init__(self, column, pivot, original_index=None):
        self.column = int(column)
        self.pivot = float(pivot)
        self.original_index = None if original_index is None else int(original_index)
        msg = f"not positive definite at column {self.column + 1} (pivot {self.pivot:.6g})"
        if original_index is not None:
            msg += f", original index {self.original_index + 1}"
        super().__init__(msg)


class BoundaryError(RemlkitError, ValueError):
    """A variance ratio sits below the admissible floor."""


class DenseThresholdError(RemlkitError, ValueError):
    """A dense O(n^3) computation was requested above the size cap."""
