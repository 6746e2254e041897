"""Exception hierarchy shared across the package."""


class CorrDPError(Exception):
    """Base class for all package errors."""


class SpecError(CorrDPError, ValueError):
    """Invalid synthetic-data specification."""


class IngestError(CorrDPError, ValueError):
    """Malformed CSV input or schema."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class ParameterError(CorrDPError, ValueError):
    """A numeric parameter is outside its admissible range."""


class DistributionError(CorrDPError, ValueError):
    """Two distributions cannot be compared."""


class EstimatorError(CorrDPError, ValueError):
    """A TV estimator cannot be evaluated on the given data."""


class ConditioningUnsupported(EstimatorError):
    """A conditioning category has no rows."""


class EstimatorMismatch(EstimatorError):
    """The estimator does not fit the feature types."""


class ProfileError(CorrDPError, KeyError):
    """A TV profile is missing an entry or is inconsistent."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ShapeError(CorrDPError, ValueError):
    """Dimension mismatch between parameters and data."""


class AssumptionError(CorrDPError, ValueError):
    """A modelling assumption does not hold."""


class DivergenceError(CorrDPError, ArithmeticError):
    """Training produced a non-finite objective."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DivergenceUndefined(CorrDPError, ValueError):
    """A Renyi divergence is undefined for the given parameters."""


class ConfigError(CorrDPError, ValueError):
    """Invalid experiment configuration."""


class DegenerateFitWarning(UserWarning):
    """A regression-based TV estimate hit a perfect linear fit."""
