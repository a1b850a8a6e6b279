"""Snippet scoring head and the top-k multiple-instance training loss.

Graph-attention output rows are lifted back onto the hyperboloid, projected
to a single spatial coordinate by a Lorentz linear map, and squashed to
(0, 1) by a sigmoid.  Video-level training supervision is the mean of the
k highest snippet scores per bag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError
from .lorentz import exp_map_origin, lorentz_linear

FRAMES_PER_SNIPPET = 16
_PROB_FLOOR = 1e-7


@dataclass
class ClassifierParams:
    weight: Tensor
    bias: Tensor

    def __post_init__(self) -> None:
        if self.weight.ndim != 2 or self.weight.shape[0] != 1:
            raise DimensionError(f"ClassifierParams: weight must be (1, D), got {self.weight.shape}")
        if self.bias.shape != (1, 1):
            raise DimensionError(f"ClassifierParams: bias must be (1, 1), got {self.bias.shape}")


def init_classifier_params(width: int, rng: np.random.Generator) -> ClassifierParams:
    weight = Tensor(rng.normal(scale=1.0 / math.sqrt(width), size=(1, width)), requires_grad=True)
    return ClassifierParams(weight=weight, bias=Tensor(np.zeros((1, 1)), requires_grad=True))


def named_classifier_params(params: ClassifierParams) -> dict[str, Tensor]:
    return {"cls.weight": params.weight, "cls.bias": params.bias}


def classify(features: Tensor, params: ClassifierParams, eta: float) -> Tensor:
    """(T, D) features -> (T, 1) anomaly scores in (0, 1).

    The features are mapped onto the hyperboloid and reduced to one spatial
    coordinate by a Lorentz linear layer; the score is the sigmoid of that
    coordinate (the time coordinate is determined by the manifold constraint
    and carries no extra information).
    """
    if features.ndim != 2 or features.shape[1] != params.weight.shape[1]:
        raise DimensionError(
            f"classify: features {features.shape} do not match weight {params.weight.shape}"
        )
    points = exp_map_origin(features, eta)
    projected = lorentz_linear(points, params.weight, params.bias)
    return ad.sigmoid(projected.values[:, 1:2])


def default_k(t: int) -> int:
    """Bag size for the top-k mean: floor(T / 16) + 1."""
    if t < 1:
        raise ContractError(f"default_k: sequence length must be >= 1, got {t}")
    return t // FRAMES_PER_SNIPPET + 1


def topk_mean(scores: Tensor, k: int | None = None) -> Tensor:
    """Mean of the k largest entries of a (T, 1) score column.

    Ties resolve toward earlier indices (stable sort on negated scores), so
    the selection is deterministic for repeated values.
    """
    if scores.ndim != 2 or scores.shape[1] != 1:
        raise DimensionError(f"topk_mean: expected (T, 1) scores, got {scores.shape}")
    t = scores.shape[0]
    if k is None:
        k = default_k(t)
    if not 1 <= k <= t:
        raise ContractError(f"topk_mean: k={k} out of range for T={t}")
    order = np.argsort(-scores.data[:, 0], kind="stable")
    picked = ad.take(scores, (list(order[:k]), slice(None)))
    return ad.reduce_mean(picked, axis=0, keepdims=True)  # (1, 1): stacks into batches


def mil_loss(bag_scores: Tensor, labels: Tensor) -> Tensor:
    """Binary cross-entropy between per-bag top-k means and video labels.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs so that
    confident-and-wrong bags produce a large finite loss instead of inf.
    """
    if bag_scores.shape != labels.shape:
        raise DimensionError(f"mil_loss: scores {bag_scores.shape} vs labels {labels.shape}")
    if not np.all((labels.data == 0.0) | (labels.data == 1.0)):
        raise ContractError("mil_loss: labels must be exactly 0 or 1")
    p = ad.clamp(bag_scores, _PROB_FLOOR, 1.0 - _PROB_FLOOR)
    one_minus = ad.sub(1.0, p)
    term = ad.add(
        ad.mul(labels, ad.log(p)),
        ad.mul(ad.sub(1.0, labels), ad.log(one_minus)),
    )
    return ad.scale(ad.reduce_mean(term), -1.0)
