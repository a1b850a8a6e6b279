"""Cross-modal fusion: prefix-tuned attention, bottleneck adapter, gating.

Visual snippets query audio snippets through multi-head attention whose key
and value blocks are extended with trainable per-head prefix rows.  The
attended signal passes through a bottleneck adapter, is gated by a sigmoid
modulation of the raw audio, and the gated signal is added back onto the
visual stream before a final fully connected refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, DimensionError

Array = np.ndarray


@dataclass
class CfaParams:
    """Trainable state for the fusion block.

    The model width equals the visual feature width; audio is projected up
    to it.  Prefixes are (D_p, head_width) blocks, one pair per head, and
    start at zero so initial attention ignores them.
    """

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    p_k: list[Tensor]
    p_v: list[Tensor]
    adapter_down: Tensor
    adapter_down_bias: Tensor
    adapter_up: Tensor
    adapter_up_bias: Tensor
    w_mod: Tensor
    w_fc: Tensor
    w_fc_bias: Tensor
    heads: int
    dropout_rate: float

    def __post_init__(self) -> None:
        if self.heads < 1:
            raise ConfigurationError(f"CfaParams: heads must be >= 1, got {self.heads}")
        d_model = self.w_q.shape[1]
        if d_model % self.heads != 0 or d_model // self.heads == 0:
            raise ConfigurationError(
                f"CfaParams: model width {d_model} does not divide into {self.heads} heads"
            )
        if len(self.p_k) != self.heads or len(self.p_v) != self.heads:
            raise ConfigurationError("CfaParams: one prefix block pair per head required")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(f"CfaParams: dropout {self.dropout_rate} not in [0, 1)")

    @property
    def d_model(self) -> int:
        return self.w_q.shape[1]

    @property
    def head_width(self) -> int:
        return self.d_model // self.heads

    @property
    def prefix_dim(self) -> int:
        return self.p_k[0].shape[0] if self.p_k else 0


def init_cfa_params(
    d_v: int,
    d_a: int,
    heads: int,
    prefix_dim: int,
    adapter_width: int,
    dropout_rate: float,
    rng: np.random.Generator,
    fc_scale: float = 0.05,
) -> CfaParams:
    """Gaussian fan-in init everywhere; prefixes zero; biases zero.

    ``fc_scale`` shrinks the refinement layer so fused rows start small:
    downstream hyperbolic maps are exponential in feature norm and must not
    begin saturated.
    """
    if heads < 1 or d_v % heads != 0:
        raise ConfigurationError(f"init_cfa_params: {heads} heads do not divide model width {d_v}")
    if prefix_dim < 0:
        raise ConfigurationError("init_cfa_params: prefix_dim must be >= 0")
    head_width = d_v // heads

    def dense(fan_in: int, fan_out: int, scl: float = 1.0) -> Tensor:
        return Tensor(rng.normal(scale=scl / math.sqrt(fan_in), size=(fan_in, fan_out)), requires_grad=True)

    return CfaParams(
        w_q=dense(d_v, d_v),
        w_k=dense(d_a, d_v),
        w_v=dense(d_a, d_v),
        w_o=dense(d_v, d_v),
        p_k=[Tensor(np.zeros((prefix_dim, head_width)), requires_grad=True) for _ in range(heads)],
        p_v=[Tensor(np.zeros((prefix_dim, head_width)), requires_grad=True) for _ in range(heads)],
        adapter_down=dense(d_v, adapter_width),
        adapter_down_bias=Tensor(np.zeros((1, adapter_width)), requires_grad=True),
        adapter_up=dense(adapter_width, d_v),
        adapter_up_bias=Tensor(np.zeros((1, d_v)), requires_grad=True),
        w_mod=dense(d_a, d_v),
        w_fc=dense(d_v, d_v, fc_scale),
        w_fc_bias=Tensor(np.zeros((1, d_v)), requires_grad=True),
        heads=heads,
        dropout_rate=dropout_rate,
    )


def named_cfa_params(params: CfaParams) -> dict[str, Tensor]:
    named = {
        "cfa.w_q": params.w_q,
        "cfa.w_k": params.w_k,
        "cfa.w_v": params.w_v,
        "cfa.w_o": params.w_o,
        "cfa.adapter_down": params.adapter_down,
        "cfa.adapter_down_bias": params.adapter_down_bias,
        "cfa.adapter_up": params.adapter_up,
        "cfa.adapter_up_bias": params.adapter_up_bias,
        "cfa.w_mod": params.w_mod,
        "cfa.w_fc": params.w_fc,
        "cfa.w_fc_bias": params.w_fc_bias,
    }
    for h in range(params.heads):
        named[f"cfa.p_k.{h}"] = params.p_k[h]
        named[f"cfa.p_v.{h}"] = params.p_v[h]
    return named


def prefix_attention(visual: Tensor, audio: Tensor, params: CfaParams) -> Tensor:
    """Multi-head attention of visual queries over audio keys/values that are
    row-extended with the trainable prefixes.  Rows of each head's attention
    matrix are a softmax over T + D_p slots."""
    if visual.ndim != 2 or visual.shape[1] != params.d_model:
        raise DimensionError(f"prefix_attention: visual {visual.shape} vs model width {params.d_model}")
    if audio.ndim != 2 or audio.shape[0] != visual.shape[0]:
        raise DimensionError(f"prefix_attention: audio {audio.shape} misaligned with visual {visual.shape}")
    q = ad.matmul(visual, params.w_q)
    k = ad.matmul(audio, params.w_k)
    v = ad.matmul(audio, params.w_v)
    hw = params.head_width
    outputs = []
    for h in range(params.heads):
        cols = slice(h * hw, (h + 1) * hw)
        q_h, k_h, v_h = q[:, cols], k[:, cols], v[:, cols]
        if params.prefix_dim > 0:
            k_h = ad.concat([k_h, params.p_k[h]], axis=0)
            v_h = ad.concat([v_h, params.p_v[h]], axis=0)
        logits = ad.scale(ad.matmul(q_h, ad.transpose(k_h)), 1.0 / math.sqrt(hw))
        outputs.append(ad.matmul(ad.softmax(logits, axis=1), v_h))
    return ad.matmul(ad.concat(outputs, axis=1), params.w_o)


def bottleneck_adapter(x: Tensor, params: CfaParams, *, training: bool = False,
                       rng: np.random.Generator | None = None) -> Tensor:
    """Down-project, GELU, dropout (train only), up-project."""
    h = ad.gelu(ad.affine(x, params.adapter_down, params.adapter_down_bias))
    h = ad.dropout(h, params.dropout_rate, training=training, rng=rng)
    return ad.affine(h, params.adapter_up, params.adapter_up_bias)


def modulation(audio: Tensor, params: CfaParams) -> Tensor:
    """Sigmoid gate over the audio stream; entries strictly inside (0, 1)."""
    return ad.sigmoid(ad.matmul(audio, params.w_mod))


def fuse(visual: Tensor, adapted: Tensor, gate: Tensor, params: CfaParams) -> Tensor:
    """Refine visual + gate*adapted with the final fully connected layer."""
    if visual.shape != adapted.shape or visual.shape != gate.shape:
        raise DimensionError(
            f"fuse: streams disagree: {visual.shape} / {adapted.shape} / {gate.shape}"
        )
    return ad.affine(ad.add(visual, ad.mul(adapted, gate)), params.w_fc, params.w_fc_bias)


def cfa_forward(
    visual: Tensor,
    audio: Tensor,
    params: CfaParams,
    *,
    training: bool = False,
    rng: np.random.Generator | None = None,
    gate_off: bool = False,
) -> Tensor:
    """Full fusion block.  ``gate_off`` forces the modulation gate to zero,
    which reduces the block to a purely visual path (the ablation mode)."""
    attended = prefix_attention(visual, audio, params)
    adapted = bottleneck_adapter(attended, params, training=training, rng=rng)
    if gate_off:
        gate = Tensor(np.zeros(adapted.shape))
    else:
        gate = modulation(audio, params)
    return fuse(visual, adapted, gate, params)
