"""Exception hierarchy shared by every qpmkit module."""


class QPMError(ValueError):
    """Base class for all qpmkit errors."""


class NonFiniteInput(QPMError):
    pass


class BadWeights(QPMError):
    pass


class EmptySupport(QPMError):
    pass


class DimensionMismatch(QPMError):
    pass


class BadGrid(QPMError):
    pass


class TooFewPoints(QPMError):
    pass


class NonSymmetric(QPMError):
    pass


class SpectralDrift(QPMError):
    """Eigenvalues of the difference operator do not sum to zero.

    The trace of the difference operator is exactly zero, so a large drift
    means the factorization or eigensolve broke down.
    """


class SqrtKernelUnavailable(QPMError):
    pass


class NondifferentiablePoint(QPMError):
    pass


class FallbackPathNoGradient(QPMError):
    pass


class CutoffTooLarge(QPMError):
    pass


class NonGaussianBase(QPMError):
    pass


class ParseError(QPMError):
    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        self.row = row
        self.column = column
        loc = ""
        if row is not None:
            loc = f" (row {row}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + loc)
