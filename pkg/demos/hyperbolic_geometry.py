"""Walk through the hyperboloid toolkit: map Euclidean rows onto the
manifold, measure intrinsic distances, and watch curvature change both.

Run:  python demos/hyperbolic_geometry.py
"""

import numpy as np

from lvad.autodiff import Tensor
from lvad.lorentz import (
    exp_map_origin,
    lorentz_distance,
    lorentz_distance_matrix,
    lorentz_inner_np,
    lorentz_linear,
    manifold_check,
    origin,
)


def main():
    rng = np.random.default_rng(1)
    eta = -1.0

    print("== from flat rows onto the hyperboloid ==")
    tangents = rng.normal(scale=0.8, size=(5, 3))
    points = exp_map_origin(Tensor(tangents), eta)
    self_products = lorentz_inner_np(points.values.data, points.values.data)
    print(f"tangent rows (3 wide) become points (4 wide, time first): {points.values.shape}")
    print(f"every self-product sits at 1/eta = {1 / eta}: {np.round(self_products, 12)}")
    ok, deviation = manifold_check(points.values.data, eta)
    print(f"manifold residence check: {ok} (max deviation {deviation:.2e})")

    print("\n== the time coordinate grows with displacement ==")
    for scale in (0.0, 0.5, 1.0, 2.0):
        row = exp_map_origin(Tensor(np.full((1, 3), scale)), eta)
        print(f"tangent norm {scale * np.sqrt(3):.2f} -> time coordinate {row.values.data[0, 0]:.4f}")

    print("\n== intrinsic distances ==")
    home = Tensor(origin(eta, 3).reshape(1, -1))
    far = exp_map_origin(Tensor(np.array([[2.0, 0.0, 0.0]])), eta)
    d = lorentz_distance(home, far.values, eta).item()
    print(f"distance from the origin after a length-2 geodesic step: {d:.6f}")

    matrix = lorentz_distance_matrix(points).data
    print("pairwise distance matrix (zero diagonal, symmetric):")
    print(np.round(matrix, 3))

    print("\n== curvature rescales the sheet ==")
    for eta_k in (-0.5, -1.0, -2.0):
        stepped = exp_map_origin(Tensor(np.array([[1.0, 0.0]])), eta_k)
        products = lorentz_inner_np(stepped.values.data, stepped.values.data)
        print(f"eta {eta_k:+.1f}: self-product {products[0]:+.4f}, "
              f"time coordinate {stepped.values.data[0, 0]:.4f}")

    print("\n== linear maps that respect the sheet ==")
    weight = Tensor(rng.normal(scale=0.5, size=(3, 3)))
    bias = Tensor(rng.normal(scale=0.1, size=(1, 3)))
    moved = lorentz_linear(points, weight, bias)
    ok, deviation = manifold_check(moved.values.data, eta)
    print(f"after a random spatial map + renormalization, still on-sheet: {ok} "
          f"(max deviation {deviation:.2e})")


if __name__ == "__main__":
    main()
