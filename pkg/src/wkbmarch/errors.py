"""Exception types shared across the package."""


class WkbError(Exception):
    """Base class for all wkbmarch errors."""


class ConfigError(WkbError):
    """Invalid configuration, CLI arguments, or problem specification."""


class DomainError(WkbError):
    """Evaluation point outside the problem domain [0, 1]."""


class DerivativeOrderError(WkbError):
    """Coefficient model does not provide enough derivatives for the request."""


class EpsilonTooLargeError(WkbError):
    """The phase derivative phi' = sqrt(a) - eps^2 b is not positive somewhere.

    Outside this regime the phase is not monotone and the schemes are invalid.
    """


class OracleBudgetError(WkbError):
    """An oracle computation would exceed its node/step budget at the
    requested tolerance (interval too long for this eps)."""


class OracleCrossValidationError(WkbError):
    """Two independent oracle routes disagree beyond the combined tolerance."""


class InsufficientDataError(WkbError):
    """Not enough usable data points for an order fit."""
