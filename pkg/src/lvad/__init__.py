"""Weakly supervised audio-visual anomaly detection on the Lorentz manifold."""

from .autodiff import Tensor, backward, finite_diff_grad, forward_op, grad_close, no_grad
from .errors import (
    ConfigurationError,
    ContractError,
    DegenerateAggregateError,
    DimensionError,
    DomainError,
    EvaluationError,
    LvadError,
    NumericError,
    ParseError,
)

__all__ = [
    "Tensor",
    "backward",
    "finite_diff_grad",
    "forward_op",
    "grad_close",
    "no_grad",
    "LvadError",
    "DimensionError",
    "DomainError",
    "ContractError",
    "NumericError",
    "ParseError",
    "EvaluationError",
    "ConfigurationError",
    "DegenerateAggregateError",
]

__version__ = "0.1.0"
