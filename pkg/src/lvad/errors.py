"""Exception vocabulary shared across the library."""


class LvadError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(LvadError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(LvadError):
    """An input lies outside the mathematical domain of an operation."""


class ContractError(LvadError):
    """A documented precondition or invariant was violated by the caller."""


class NumericError(LvadError):
    """A computation produced non-finite values."""


class ParseError(LvadError):
    """A file or manifest could not be decoded."""


class EvaluationError(LvadError):
    """Evaluation was requested on data that cannot support it."""


class ConfigurationError(LvadError):
    """A configuration value is invalid or inconsistent."""


class DegenerateAggregateError(LvadError):
    """Graph aggregation collapsed to a near-null vector."""
