"""Exception hierarchy shared by all modules."""


class IVPolicyError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(IVPolicyError, ValueError):
    """Invalid user configuration (distribution specs, fold counts, costs, ...)."""


class DomainError(IVPolicyError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class EstimationError(IVPolicyError):
    """A fit could not be carried out (rank deficiency, empty neighborhoods)."""


class IdentificationError(EstimationError):
    """The data do not carry the variation an estimator needs."""


class ExtrapolationError(IVPolicyError):
    """Evaluation requested outside the range where a fitted model is identified.

    ``rows`` holds the offending row indices when the error was raised for a batch.
    """

    def __init__(self, message, rows=None):
        super().__init__(message)
        self.rows = [] if rows is None else list(rows)


class InfeasibleError(IVPolicyError):
    """A constrained problem has no feasible point."""


class SchemaError(ConfigurationError):
    """Input data do not follow the expected column layout."""
