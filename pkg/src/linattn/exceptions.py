"""Error taxonomy shared across the package.

Validation problems subclass ValueError so generic callers keep working;
numerical failures subclass RuntimeError (a solve or training run that was
structurally fine but broke down numerically).
"""


class EmptyDataset(ValueError):
    """Requested a dataset with zero samples or zero features."""


class RankInfeasible(ValueError):
    """Spectrum construction needs n <= d."""


class BadSpectrum(ValueError):
    """Singular values must be strictly positive and non-increasing."""


class UnsupportedFormat(ValueError):
    """Unknown or unparseable file format."""


class ParseError(ValueError):
    """Malformed data row; carries the offending row index."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class LabelOutOfRange(ValueError):
    """Class label outside [0, num_classes)."""


class DegenerateRow(ValueError):
    """Zero row where a nonzero vector is required (e.g. before normalizing)."""


class OracleSizeExceeded(ValueError):
    """Brute-force oracle called above its size guard."""


class BadDegree(ValueError):
    """Polynomial kernel degree must be a positive integer."""


class ShapeError(ValueError):
    """Operand shapes are inconsistent."""


class NotSymmetric(ValueError):
    """Matrix expected to be symmetric is not, beyond tolerance."""


class ZeroMatrix(ValueError):
    """All-zero spectrum has no condition number."""


class BadTolerance(ValueError):
    """Tolerance parameter outside its valid open interval."""


class CannotLeaveOneOut(ValueError):
    """Leave-one-out needs at least two training points."""


class BoundInapplicable(ValueError):
    """Perturbation norm reaches the regularization level; resolvent bound void."""


class BadLambda(ValueError):
    """Regularization strength must be positive."""


class BadThreshold(ValueError):
    """Selection threshold must lie in (0, 1)."""


class EmptySelection(ValueError):
    """A metric over a high-influence set needs a nonempty set."""


class BadK(ValueError):
    """Top-K overlap needs K >= 1."""


class IllConditioned(RuntimeError):
    """Kernel failed the numerical stability checks required before solving."""


class TrainingDiverged(RuntimeError):
    """Training loss became NaN or infinite."""


class RankWarning(UserWarning):
    """Projection matrix is rank deficient; result still returned."""


class DegenerateRanking(UserWarning):
    """Rank correlation of a constant vector is undefined; reported as 0."""
