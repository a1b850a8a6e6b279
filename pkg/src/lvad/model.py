"""Full pipeline assembly: fusion -> hyperbolic graph attention -> scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import ConfigurationError, DimensionError
from .fusion import CfaParams, cfa_forward, init_cfa_params, named_cfa_params
from .graph_attn import HlgattParams, hlgatt_forward, init_hlgatt_params, named_hlgatt_params
from .scoring import ClassifierParams, classify, init_classifier_params, named_classifier_params


@dataclass
class ModelParams:
    cfa: CfaParams
    hlgatt: HlgattParams
    classifier: ClassifierParams
    curvature: float = -1.0

    def __post_init__(self) -> None:
        if self.curvature >= 0.0:
            raise ConfigurationError(f"ModelParams: curvature must be negative, got {self.curvature}")
        d = self.cfa.d_model
        if self.hlgatt.node_a_weights[0].shape != (d, d):
            raise ConfigurationError("ModelParams: graph block width must equal fused width")
        if self.classifier.weight.shape[1] != d + 1:
            raise ConfigurationError("ModelParams: classifier width must be fused width + 1")


def init_model_params(
    d_v: int,
    d_a: int,
    *,
    heads: int,
    prefix_dim: int,
    adapter_width: int,
    dropout: float,
    layers: int,
    epsilon: float,
    slope: float,
    gamma_init: float,
    curvature: float,
    rng: np.random.Generator,
) -> ModelParams:
    return ModelParams(
        cfa=init_cfa_params(d_v, d_a, heads, prefix_dim, adapter_width, dropout, rng),
        hlgatt=init_hlgatt_params(d_v, layers, epsilon, slope, gamma_init, rng),
        classifier=init_classifier_params(d_v + 1, rng),
        curvature=curvature,
    )


def named_model_params(params: ModelParams) -> dict[str, Tensor]:
    named: dict[str, Tensor] = {}
    named.update(named_cfa_params(params.cfa))
    named.update(named_hlgatt_params(params.hlgatt))
    named.update(named_classifier_params(params.classifier))
    return named


def set_requires_grad(params: ModelParams, flag: bool = True) -> None:
    for tensor in named_model_params(params).values():
        tensor.requires_grad = flag


def model_forward(
    visual: Tensor,
    audio: Tensor,
    params: ModelParams,
    *,
    training: bool = False,
    rng: np.random.Generator | None = None,
    gate_off: bool = False,
) -> Tensor:
    """Per-snippet anomaly scores, shape (T, 1), entries in (0, 1)."""
    if visual.ndim != 2 or audio.ndim != 2 or visual.shape[0] != audio.shape[0]:
        raise DimensionError(
            f"model_forward: visual {visual.shape} and audio {audio.shape} misaligned"
        )
    fused = cfa_forward(visual, audio, params.cfa, training=training, rng=rng, gate_off=gate_off)
    features = hlgatt_forward(fused, params.hlgatt, params.curvature)
    return classify(features, params.classifier, params.curvature)
