"""Exception hierarchy.

Three broad families, mirroring how failures should be handled at the
command line: configuration/validation problems (user fixable, exit 2),
solver breakdowns (exit 3), and data problems (exit 4).
"""


class DrpfolioError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(DrpfolioError):
    """Invalid argument, configuration value, or object state."""


class DimensionMismatchError(ValidationError):
    pass


class InvalidWeightsError(ValidationError):
    pass


class InvalidSelectionError(ValidationError):
    pass


class CardinalityMismatchError(ValidationError):
    pass


class NeighborhoodExhaustedError(ValidationError):
    pass


class TooManySubsetsError(ValidationError):
    pass


class NonpositiveWealthError(ValidationError):
    pass


class MissingMarketCapsError(ValidationError):
    pass


class SingularCovarianceError(ValidationError):
    pass


class PlanTooLongError(ValidationError):
    pass


class BarrierDomainError(ValidationError):
    """Barrier slack evaluated at a non-positive value."""


class NegativeMultiplierError(ValidationError):
    """An inequality multiplier with a negative entry was supplied."""


class PenaltyConfigError(ValidationError):
    """Penalty continuation parameters outside their valid ranges."""


class SolverError(DrpfolioError):
    """Numerical solver failed to reach its tolerance."""


class MaxIterationsError(SolverError):
    pass


class DataError(DrpfolioError):
    """Problem with input data files or their contents."""


class MissingFileError(DataError):
    pass


class EmptyDataError(DataError):
    pass


class TooFewSamplesError(DataError):
    pass


class ReturnTooLowError(DataError):
    """A per-period simple return at or below -100% (wealth would vanish)."""


class DuplicateAssetIdError(DataError):
    pass


class MalformedCellError(DataError):
    """A CSV cell that does not parse as a finite float.

    Coordinates are 1-based within the data section: row 1 is the first
    row after the header, column 1 the first asset column.
    """

    def __init__(self, row: int, col: int, message: str = ""):
        self.row = row
        self.col = col
        detail = message or f"malformed cell at data row {row}, column {col}"
        super().__init__(detail)


class MetricError(DrpfolioError):
    """A performance metric is undefined for the given inputs."""


class ZeroVariancePathError(MetricError):
    pass


class ZeroTrackingVarianceError(ZeroVariancePathError):
    pass


class ZeroVarianceBenchmarkError(MetricError):
    pass


class ZeroBetaError(MetricError):
    pass
