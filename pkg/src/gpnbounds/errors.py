"""Exception hierarchy shared by every module in the package."""


class GPNError(Exception):
    """Base class for all package errors."""


class DomainError(GPNError, ValueError):
    """An argument lies outside its mathematical domain (or is NaN)."""


class DegenerateDenominatorError(DomainError):
    """P(Y(1) >= c1 | x) is zero, so the GPN ratio is undefined."""


class DegenerateIntervalError(DomainError):
    """Interval-GPN survival probabilities coincide."""


class MissingInputError(GPNError, ValueError):
    pass


class EmptyInputError(GPNError, ValueError):
    pass


class InconsistentCurveError(GPNError, ValueError):
    """A sensitivity curve is not monotone nonincreasing."""


class UnsupportedOperationError(GPNError, NotImplementedError):
    pass


class DegenerateTreatmentError(GPNError, ValueError):
    """Only one treatment arm is present in the data."""


class FitError(GPNError, RuntimeError):
    """A nuisance or final-stage regression failed to fit."""


class SubsampleAbortError(GPNError, RuntimeError):
    """Too many subsample replicates failed."""


class ConfigError(GPNError, ValueError):
    pass


class DataError(GPNError, ValueError):
    pass
