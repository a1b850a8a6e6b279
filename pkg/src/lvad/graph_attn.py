"""Hyperbolic Lorentzian graph attention over snippet sequences.

Fused features are lifted onto the hyperboloid, where two parallel node
branches each run L rounds of distance-softmax adjacency building and
Lorentz-normalized neighbor aggregation.  Both branches then pass through a
feature enhancement that rebalances the temporal (time-coordinate) and
spatial parts of every row, and the branches are finally combined by a
dual-node attention product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, ContractError, DegenerateAggregateError, DimensionError
from .lorentz import LorentzPoints, exp_map_origin, lorentz_distance_matrix, lorentz_inner, lorentz_linear

Array = np.ndarray

_NULL_NORM_FLOOR = 1e-12


@dataclass
class HlgattParams:
    """Per-branch Lorentz linear stacks plus the enhancement scalars."""

    node_a_weights: list[Tensor]
    node_a_biases: list[Tensor]
    node_b_weights: list[Tensor]
    node_b_biases: list[Tensor]
    gamma_a: Tensor
    gamma_b: Tensor
    epsilon: float = 1e-6
    slope: float = -2.0
    layers: int = 2

    def __post_init__(self) -> None:
        if self.layers < 1:
            raise ConfigurationError(f"HlgattParams: layers must be >= 1, got {self.layers}")
        if self.epsilon <= 0.0:
            raise ConfigurationError(f"HlgattParams: epsilon must be positive, got {self.epsilon}")
        for stack in (self.node_a_weights, self.node_a_biases, self.node_b_weights, self.node_b_biases):
            if len(stack) != self.layers:
                raise ConfigurationError("HlgattParams: one weight/bias per layer per branch")


def init_hlgatt_params(
    width: int,
    layers: int,
    epsilon: float,
    slope: float,
    gamma_init: float,
    rng: np.random.Generator,
) -> HlgattParams:
    def dense() -> Tensor:
        return Tensor(rng.normal(scale=1.0 / math.sqrt(width), size=(width, width)), requires_grad=True)

    def bias() -> Tensor:
        return Tensor(np.zeros((1, width)), requires_grad=True)

    return HlgattParams(
        node_a_weights=[dense() for _ in range(layers)],
        node_a_biases=[bias() for _ in range(layers)],
        node_b_weights=[dense() for _ in range(layers)],
        node_b_biases=[bias() for _ in range(layers)],
        gamma_a=Tensor(np.float64(gamma_init), requires_grad=True),
        gamma_b=Tensor(np.float64(gamma_init), requires_grad=True),
        epsilon=epsilon,
        slope=slope,
        layers=layers,
    )


def named_hlgatt_params(params: HlgattParams) -> dict[str, Tensor]:
    named: dict[str, Tensor] = {"hlgatt.gamma_a": params.gamma_a, "hlgatt.gamma_b": params.gamma_b}
    for l in range(params.layers):
        named[f"hlgatt.a.{l}.weight"] = params.node_a_weights[l]
        named[f"hlgatt.a.{l}.bias"] = params.node_a_biases[l]
        named[f"hlgatt.b.{l}.weight"] = params.node_b_weights[l]
        named[f"hlgatt.b.{l}.bias"] = params.node_b_biases[l]
    return named


def build_adjacency(points: LorentzPoints) -> Tensor:
    """Row-stochastic adjacency: softmax over j of exp(-d(i, j)).

    Self-distances are exactly zero, so the diagonal logit exp(0) = 1 is the
    row maximum and each diagonal entry dominates its row.
    """
    dist = lorentz_distance_matrix(points, zero_diagonal=True)
    return ad.softmax(ad.exp(ad.scale(dist, -1.0)), axis=1)


def aggregate(points: LorentzPoints, adjacency: Tensor, weight: Tensor, bias: Tensor) -> LorentzPoints:
    """Neighborhood-normalized Lorentz-linear transformation.

    Row i is u_i = (sum_j A_ij) * f_HL(x_i), renormalized onto the
    hyperboloid as z_i = u_i / (sqrt(-eta) * |<u_i, u_i>_L|^(1/2)).  The
    neighbor weights multiply the transformed feature of snippet i itself,
    so with a row-stochastic A the weights contribute a factor of exactly
    one: each snippet is transformed in place and keeps its identity, which
    the per-snippet scoring head downstream depends on.  Cross-snippet
    mixing belongs to the dual-node attention stage instead.
    """
    t = points.count
    if adjacency.ndim != 2 or adjacency.data.shape != (t, t):
        raise DimensionError(f"aggregate: adjacency {adjacency.data.shape} does not match T={t}")
    row_sums = adjacency.data.sum(axis=1)
    if not np.allclose(row_sums, 1.0, atol=1e-6):
        raise ContractError("aggregate: adjacency must be row-stochastic")
    eta = points.curvature
    transformed = lorentz_linear(points, weight, bias)
    totals = ad.matmul(adjacency, Tensor(np.ones((t, 1))))
    u = ad.mul(transformed.values, ad.tile_rows(totals, transformed.values.shape[1]))
    inner = lorentz_inner(u, u)
    if np.any(np.abs(inner.data) < _NULL_NORM_FLOOR):
        raise DegenerateAggregateError("aggregate: row collapsed onto the light cone")
    norm = ad.sqrt(ad.absval(inner))
    inv = ad.reciprocal_positive(ad.scale(norm, math.sqrt(-eta)))
    z = ad.mul(u, ad.tile_rows(inv, u.shape[1]))
    return LorentzPoints(z, eta)


def enhance(rows: Tensor, gamma: Tensor, epsilon: float) -> Tensor:
    """Temporal/spatial rebalancing of hyperboloid rows.

    Temp = sigmoid(row[0]) * e^gamma + 1.1
    Y    = (Temp^2 - 1) / (sum(S^2) + epsilon)
    out  = [Temp, S * sqrt(Y)]

    The output self-product is -(1 + epsilon*Y): slightly off-manifold by
    construction, converging to the manifold as epsilon -> 0.
    """
    if epsilon <= 0.0:
        raise ContractError(f"enhance: epsilon must be positive, got {epsilon}")
    if rows.ndim != 2 or rows.shape[1] < 2:
        raise DimensionError(f"enhance: expected (T, 1+D) rows, got {rows.shape}")
    time = rows[:, 0:1]
    spatial = rows[:, 1:]
    temp = ad.add(ad.mul(ad.sigmoid(time), ad.exp(gamma)), 1.1)
    s_sq = ad.add(ad.squared_norm(spatial, axis=1, keepdims=True), epsilon)
    upsilon = ad.mul(ad.sub(ad.mul(temp, temp), 1.0), ad.reciprocal_positive(s_sq))
    scaled = ad.mul(spatial, ad.tile_rows(ad.sqrt(upsilon), spatial.shape[1]))
    return ad.concat([temp, scaled], axis=1)


def node_a_activation(rows: Tensor, slope: float) -> Tensor:
    """Leaky-relu then row-softmax; every output row sums to one."""
    return ad.softmax(ad.leaky_relu(rows, slope), axis=1)


def dual_node_attention(node_a: Tensor, node_b: Tensor) -> Tensor:
    """ReLU of the node-A/node-B attention map applied to node-B features.

    ``node_a`` must already be activation-processed (rows sum to one).  The
    T x T map M = A B^T is applied as a mean over the attended axis (1/T)
    rather than a raw sum: this keeps output rows bounded for every sequence
    length, which the downstream exponential map requires.
    """
    if node_a.shape != node_b.shape or node_a.ndim != 2:
        raise DimensionError(f"dual_node_attention: shapes {node_a.shape} vs {node_b.shape}")
    t = node_a.shape[0]
    m = ad.matmul(node_a, ad.transpose(node_b))
    return ad.relu(ad.scale(ad.matmul(m, node_b), 1.0 / t))


def hlgatt_forward(fused: Tensor, params: HlgattParams, eta: float) -> Tensor:
    """exp map -> per-branch L x (adjacency, aggregate) -> enhance ->
    node-A activation -> dual-node attention.  Returns (T, 1+D) features."""
    points = exp_map_origin(fused, eta)
    branch_a = branch_b = points
    for l in range(params.layers):
        branch_a = aggregate(branch_a, build_adjacency(branch_a), params.node_a_weights[l], params.node_a_biases[l])
        branch_b = aggregate(branch_b, build_adjacency(branch_b), params.node_b_weights[l], params.node_b_biases[l])
    enhanced_a = enhance(branch_a.values, params.gamma_a, params.epsilon)
    enhanced_b = enhance(branch_b.values, params.gamma_b, params.epsilon)
    return dual_node_attention(node_a_activation(enhanced_a, params.slope), enhanced_b)
