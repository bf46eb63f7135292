"""Exception and warning classes raised by coxflow."""

from sklearn.exceptions import ConvergenceWarning


class CoxFlowError(Exception):
    """Base class for all coxflow errors."""


class NonFiniteState(CoxFlowError, FloatingPointError):
    """A trajectory state overflowed during integration."""


class SingularFlow(CoxFlowError, FloatingPointError):
    """The Euler flow map lost orientation (det J <= 0)."""


class NonFiniteLikelihood(CoxFlowError, FloatingPointError):
    """A likelihood component is not finite."""


class NonFiniteForecast(CoxFlowError, FloatingPointError):
    """The survival forecast integral overflowed."""


class DivisionByZeroWeight(CoxFlowError, ZeroDivisionError):
    """A pilot coefficient is too close to zero to weight the penalty."""


class HazardTooFlat(CoxFlowError, RuntimeError):
    """Event times could not be drawn below ``t_max``."""


class DataError(CoxFlowError, ValueError):
    """Base class for malformed input data."""


class SchemaError(DataError):
    pass


class EmptyDataset(DataError):
    pass


class PanelOrderError(DataError):
    pass


class MissingEventRow(DataError):
    pass


class InsufficientPanel(DataError):
    pass


class NoConvergence(ConvergenceWarning):
    """Optimizer exhausted its iteration budget; the result is partial."""
