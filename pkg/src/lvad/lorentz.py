"""Lorentz-model hyperbolic geometry with curvature eta < 0.

Points live on the upper sheet of the hyperboloid

    <x, x>_L = 1/eta,   x_0 >= 1/sqrt(-eta),

where <x, y>_L = -x_0 y_0 + sum_i x_i y_i is the Lorentzian inner product.
All functions are differentiable compositions of the tensor ops, so the
whole geometry participates in backpropagation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError

Array = np.ndarray

# sinh(r)/r and cosh(r) switch to their series below this r**2 threshold,
# removing the 0/0 at the origin (r < 1e-6).
_SERIES_THRESHOLD = 1e-12

# Cancellation in  -x0^2 + |xs|^2  grows with x0^2; the on-manifold check
# widens its tolerance accordingly so large-radius points are not rejected
# for plain float64 rounding.
_CANCEL_SLACK = 5e-13


def origin(eta: float, spatial_width: int) -> Array:
    """The hyperboloid base point (1/sqrt(-eta), 0, ..., 0)."""
    _require_curvature(eta)
    o = np.zeros(1 + spatial_width)
    o[0] = 1.0 / math.sqrt(-eta)
    return o


def _require_curvature(eta: float) -> None:
    if not eta < 0.0:
        raise ContractError(f"curvature must be negative, got {eta}")


def lorentz_inner(x: Tensor, y: Tensor) -> Tensor:
    """Row-wise Lorentzian inner product; (T, 1+D) inputs give a (T, 1) column."""
    if x.ndim != 2 or y.ndim != 2 or x.shape != y.shape or x.shape[1] < 2:
        raise DimensionError(f"lorentz_inner: incompatible shapes {x.shape} and {y.shape}")
    spatial = ad.reduce_sum(ad.mul(x[:, 1:], y[:, 1:]), axis=1, keepdims=True)
    time = ad.mul(x[:, 0:1], y[:, 0:1])
    return ad.sub(spatial, time)


def lorentz_inner_np(x: Array, y: Array) -> Array:
    """Plain-value counterpart of lorentz_inner for checks and tests."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    out = np.sum(x[:, 1:] * y[:, 1:], axis=1) - x[:, 0] * y[:, 0]
    return out[0] if single else out


def manifold_check(values, eta: float, tol: float = 1e-6) -> tuple[bool, float]:
    """Return (ok, max deviation of <x,x>_L from 1/eta); also checks the sheet."""
    _require_curvature(eta)
    v = values.data if isinstance(values, Tensor) else np.asarray(values, dtype=np.float64)
    v = np.atleast_2d(v)
    deviation = float(np.max(np.abs(lorentz_inner_np(v, v) - 1.0 / eta))) if v.size else 0.0
    on_sheet = bool(np.all(v[:, 0] >= 1.0 / math.sqrt(-eta) - tol))
    return (deviation <= tol and on_sheet), deviation


def _scale_aware_tol(v: Array, tol: float) -> float:
    # allowance grows with the squared time coordinate (catastrophic
    # cancellation between -x0^2 and |xs|^2 at large radius)
    peak = float(np.max(v[:, 0] ** 2)) if v.size else 1.0
    return max(tol, peak * _CANCEL_SLACK)


def require_on_manifold(values, eta: float, tol: float = 1e-6, who: str = "lorentz") -> None:
    v = values.data if isinstance(values, Tensor) else np.asarray(values, dtype=np.float64)
    v = np.atleast_2d(v)
    ok, deviation = manifold_check(v, eta, _scale_aware_tol(v, tol))
    if not ok:
        raise ContractError(f"{who}: input off the hyperboloid (deviation {deviation:.3e})")


@dataclass
class LorentzPoints:
    """A (T, 1+D) block of hyperboloid points flowing through the graph."""

    values: Tensor
    curvature: float

    def __post_init__(self) -> None:
        _require_curvature(self.curvature)
        if self.values.ndim != 2 or self.values.shape[1] < 2:
            raise DimensionError(f"LorentzPoints: expected (T, 1+D) values, got {self.values.shape}")
        require_on_manifold(self.values, self.curvature, who="LorentzPoints")

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def spatial_width(self) -> int:
        return self.values.shape[1] - 1


def _series_masks(q: Array) -> tuple[Tensor, Tensor]:
    small = (q < _SERIES_THRESHOLD).astype(np.float64)
    return Tensor(small), Tensor(1.0 - small)


def _sinhc_and_cosh(q: Tensor) -> tuple[Tensor, Tensor]:
    """sinh(r)/r and cosh(r) as smooth functions of q = r**2 >= 0.

    Rows with tiny q use the Taylor series (exact at q = 0); the rest use
    the closed form on a shifted copy so no log/sqrt ever sees zero.  The
    constant 0/1 masks keep gradients flowing through the right branch only.
    """
    small, big = _series_masks(q.data)
    q_safe = ad.add(q, small)  # tiny rows are bumped to ~1, then masked out
    r = ad.sqrt(q_safe)
    sinhc_big = ad.mul(ad.sinh(r), ad.reciprocal_positive(r))
    cosh_big = ad.cosh(r)
    q2 = ad.mul(q, q)
    sinhc_series = ad.add(ad.add(ad.scale(q, 1.0 / 6.0), ad.scale(q2, 1.0 / 120.0)), 1.0)
    cosh_series = ad.add(ad.add(ad.scale(q, 0.5), ad.scale(q2, 1.0 / 24.0)), 1.0)
    sinhc = ad.add(ad.mul(small, sinhc_series), ad.mul(big, sinhc_big))
    cosh = ad.add(ad.mul(small, cosh_series), ad.mul(big, cosh_big))
    return sinhc, cosh


def exp_map_origin(v: Tensor, eta: float) -> LorentzPoints:
    """Map tangent rows at the origin onto the hyperboloid.

    time    = cosh(r) / sqrt(-eta),        r = sqrt(-eta) * |v|
    spatial = v * sinh(r) / r

    Zero rows land exactly on the origin point.
    """
    _require_curvature(eta)
    if v.ndim != 2:
        raise DimensionError(f"exp_map_origin: expected (T, D) tangents, got {v.shape}")
    q = ad.scale(ad.squared_norm(v, axis=1, keepdims=True), -eta)  # r^2, (T, 1)
    sinhc, cosh = _sinhc_and_cosh(q)
    time = ad.scale(cosh, 1.0 / math.sqrt(-eta))
    spatial = ad.mul(v, ad.tile_rows(sinhc, v.shape[1]))
    return LorentzPoints(ad.concat([time, spatial], axis=1), eta)


def lorentz_linear(points: LorentzPoints, weight: Tensor, bias: Tensor) -> LorentzPoints:
    """Affine map on spatial coordinates with the time coordinate recomputed
    so the output sits back on the hyperboloid:  t = sqrt(1/(-eta) + |s|^2)."""
    if weight.ndim != 2 or weight.shape[1] != points.spatial_width:
        raise DimensionError(
            f"lorentz_linear: weight {weight.shape} does not act on spatial width {points.spatial_width}"
        )
    eta = points.curvature
    s = ad.affine(points.values[:, 1:], ad.transpose(weight), bias)
    t = ad.sqrt(ad.add(ad.squared_norm(s, axis=1, keepdims=True), 1.0 / -eta))
    return LorentzPoints(ad.concat([t, s], axis=1), eta)


def lorentz_distance(x: Tensor, y: Tensor, eta: float, *, validate: bool = True) -> Tensor:
    """Row-wise geodesic distance (1/sqrt(-eta)) * arccosh(eta * <x,y>_L).

    ``validate=False`` skips the on-manifold contract check so finite
    difference probes (which step off the sheet) can pass through.
    """
    _require_curvature(eta)
    if validate:
        require_on_manifold(x, eta, who="lorentz_distance")
        require_on_manifold(y, eta, who="lorentz_distance")
    arg = ad.scale(lorentz_inner(x, y), eta)
    return ad.scale(ad.arccosh(arg), 1.0 / math.sqrt(-eta))


def lorentz_distance_matrix(points: LorentzPoints, *, zero_diagonal: bool = True) -> Tensor:
    """All-pairs geodesic distances as a (T, T) tensor.

    The inputs are manifold-validated, so every argument of arccosh is >= 1
    in exact arithmetic; what lands below 1 is cancellation noise, which for
    points of time coordinate c has magnitude ~c^2 * 1e-16 (the gram entries
    are differences of O(c^2) products).  The argument is therefore rectified
    onto [1, inf) instead of being pushed through the op's fixed noise
    threshold, which far-from-origin points would trip spuriously.

    The diagonal is pinned to exactly zero by a constant mask: d(x, x) = 0
    holds in exact arithmetic, and evaluating arccosh there would only
    amplify rounding noise through the clamp.
    """
    eta = points.curvature
    v = points.values
    spatial = v[:, 1:]
    time = v[:, 0:1]
    gram = ad.sub(ad.matmul(spatial, ad.transpose(spatial)), ad.matmul(time, ad.transpose(time)))
    arg = ad.add(ad.relu(ad.sub(ad.scale(gram, eta), 1.0)), 1.0)
    dist = ad.scale(ad.arccosh(arg), 1.0 / math.sqrt(-eta))
    if zero_diagonal:
        hollow = Tensor(1.0 - np.eye(points.count))
        dist = ad.mul(dist, hollow)
    return dist
