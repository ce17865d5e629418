"""Exception and warning types shared across the toolkit."""


class SparseScoreError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatch(SparseScoreError):
    """Matrix or vector dimensions are incompatible."""


class EmptyClass(SparseScoreError):
    """A class label in 1..K has no members."""

    def __init__(self, k):
        super().__init__(f"class {k} has no members")
        self.k = k


class LabelOutOfRange(SparseScoreError):
    """A label falls outside 1..K."""


class SpecInvalid(SparseScoreError):
    """A parameter bundle violates its own constraints."""


class DegenerateDirection(SparseScoreError):
    """A discriminant produced no usable scoring direction (w'Dw ~ 0)."""


class SingularSystem(SparseScoreError):
    """A linear system that should be nonsingular failed to solve."""


class RankCollapse(SparseScoreError):
    """Gram-Schmidt ran out of independent directions after retries."""


class FactorizationFailure(SparseScoreError):
    """A Cholesky factorization of an SPD matrix failed."""


class NonFiniteEncountered(SparseScoreError):
    """An iterate or objective became NaN or infinite."""


class DataFormatError(SparseScoreError):
    """Base class for delimited-file parsing errors."""


class RaggedRows(DataFormatError):
    def __init__(self, line):
        super().__init__(f"row at line {line} has a different field count")
        self.line = line


class NonNumericField(DataFormatError):
    def __init__(self, line, col):
        super().__init__(f"non-numeric field at line {line}, column {col}")
        self.line = line
        self.col = col


class UnknownLabel(DataFormatError):
    """A label absent from the training remap appeared in new data."""


class TooFewSamples(SparseScoreError):
    """A class has fewer members than the requested fold count."""


class AllCellsFailed(SparseScoreError):
    """Every cross-validation cell failed to fit."""


class MaxIterExceeded(UserWarning):
    """An iterative solver hit its iteration cap; best iterate returned."""


class NotConverged(UserWarning):
    """An outer loop hit its iteration cap; best state returned."""


class RankDeficient(UserWarning):
    """The orthonormal projection target is rank deficient; minimizer non-unique."""


class ZeroBeta(UserWarning):
    """The ridge solution is identically zero; any l1 weight is admissible."""


class DegenerateColumn(UserWarning):
    """A deflation column was skipped because its direction degenerated."""
