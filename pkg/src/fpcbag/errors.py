"""Exception types raised across the package."""


class FpcbagError(Exception):
    """Base class for all package errors."""


# data layer
class DataError(FpcbagError, ValueError):
    pass


class SchemaError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class DuplicateObservationError(DataError):
    pass


class InsufficientObservationsError(DataError):
    pass


class LabelMissingError(DataError):
    pass


# smoothing / FPCA
class InsufficientDataError(FpcbagError, ValueError):
    pass


class SmoothingError(FpcbagError, RuntimeError):
    pass


class CovarianceError(FpcbagError, ValueError):
    """Covariance cannot be estimated (no curve with two or more observations)."""


class DegenerateCovarianceError(FpcbagError, ValueError):
    """No positive eigenvalue in the estimated covariance surface."""


class ExtrapolationError(FpcbagError, ValueError):
    pass


class NumericalError(FpcbagError, ArithmeticError):
    pass


# classifiers / ensemble
class DegenerateLabelsError(FpcbagError, ValueError):
    pass


class ShapeError(FpcbagError, ValueError):
    pass


class ReplicaError(FpcbagError, RuntimeError):
    """A bootstrap replica could not be fitted within the redraw budget."""


class DomainError(FpcbagError, ValueError):
    pass


class ExperimentError(FpcbagError, RuntimeError):
    pass


class SeparationWarning(UserWarning):
    """Logistic fit did not converge because the classes are (quasi-)separated."""
