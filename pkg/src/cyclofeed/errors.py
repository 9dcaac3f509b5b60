"""Exception hierarchy shared across the package."""


class CyclofeedError(Exception):
    """Base class for all errors raised by cyclofeed."""


class DimensionError(CyclofeedError):
    """A vector or matrix has an unusable shape (e.g. dimension < 3)."""


class DomainError(CyclofeedError):
    """An input lies outside the mathematical domain of an operation."""


class ParseError(CyclofeedError):
    """Expression or model text failed to parse.

    Carries a 1-based ``column`` when the offending position is known.
    """

    def __init__(self, message, column=None):
        if column is not None:
            message = f"{message} (column {column})"
        super().__init__(message)
        self.column = column


class EvalError(CyclofeedError):
    """Expression evaluation failed (unbound symbol, division by zero, overflow)."""


class ModelFormatError(CyclofeedError):
    """A model file or ModelSpec definition is malformed."""


class IntegrationError(CyclofeedError):
    """Numerical integration aborted; ``time`` is the abort time when known."""

    def __init__(self, message, time=None):
        if time is not None:
            message = f"{message} (t = {time!r})"
        super().__init__(message)
        self.time = time


class StepUnderflowError(IntegrationError):
    """The adaptive step controller drove the step size below resolution."""


class IndeterminateSignError(CyclofeedError):
    """No sampled derivative was conclusively nonzero for some feedback sign."""


class HypothesisGateError(CyclofeedError):
    """The model does not satisfy the structural hypotheses of the requested check."""


class UsageError(CyclofeedError):
    """Bad command-line usage (maps to exit code 1)."""
