"""Geometry invariants: manifold membership, distance axioms, gradient oracles."""

import math

import numpy as np
import pytest

from lvad import autodiff as ad
from lvad.autodiff import Tensor, backward, finite_diff_grad, grad_close
from lvad.errors import ContractError, DimensionError
from lvad.lorentz import (
    LorentzPoints,
    exp_map_origin,
    lorentz_distance,
    lorentz_distance_matrix,
    lorentz_inner,
    lorentz_inner_np,
    lorentz_linear,
    manifold_check,
    origin,
)

RNG = np.random.default_rng(501)


def random_points(t: int, d: int, eta: float = -1.0, scl: float = 1.5) -> LorentzPoints:
    v = Tensor(RNG.uniform(-scl, scl, size=(t, d)))
    return exp_map_origin(v, eta)


# ---------------------------------------------------------------------------
# Inner product and manifold anchors.

def test_inner_product_of_origin_row():
    x = np.array([[1.0, 0.0, 0.0]])
    assert lorentz_inner_np(x, x)[0] == pytest.approx(-1.0)


def test_inner_product_mixed_signature():
    x = np.array([[2.0, 1.0, 1.0]])
    y = np.array([[1.0, 3.0, -1.0]])
    # -2*1 + 1*3 + 1*(-1) = 0
    assert lorentz_inner_np(x, y)[0] == pytest.approx(0.0)
    t = lorentz_inner(Tensor(x), Tensor(y))
    assert t.data.shape == (1, 1) and t.item() == pytest.approx(0.0)


def test_origin_is_on_manifold_for_various_curvatures():
    for eta in (-1.0, -0.5, -2.0):
        o = origin(eta, 4)
        ok, dev = manifold_check(o, eta)
        assert ok and dev < 1e-12
        assert o[0] == pytest.approx(1.0 / math.sqrt(-eta))


def test_manifold_check_flags_off_sheet_points():
    bad = np.array([[1.5, 0.0, 0.0]])  # <x,x> = -2.25 != -1
    ok, dev = manifold_check(bad, -1.0)
    assert not ok and dev == pytest.approx(1.25)


# ---------------------------------------------------------------------------
# exp_map_origin.

def test_exp_map_zero_row_is_exactly_origin():
    pts = exp_map_origin(Tensor(np.zeros((1, 5))), -1.0)
    np.testing.assert_array_equal(pts.values.data, origin(-1.0, 5).reshape(1, 6))


def test_exp_map_zero_row_other_curvature():
    eta = -0.25
    pts = exp_map_origin(Tensor(np.zeros((2, 3))), eta)
    np.testing.assert_allclose(pts.values.data[:, 0], 2.0)
    np.testing.assert_array_equal(pts.values.data[:, 1:], 0.0)


def test_exp_map_known_value():
    # v = (1, 0): r = 1, point = (cosh 1, sinh 1, 0)
    pts = exp_map_origin(Tensor([[1.0, 0.0]]), -1.0)
    np.testing.assert_allclose(pts.values.data, [[math.cosh(1.0), math.sinh(1.0), 0.0]], atol=1e-15)


def test_exp_map_lands_on_manifold_randomized():
    for trial in range(200):
        t = int(RNG.integers(1, 6))
        d = int(RNG.integers(2, 9))
        eta = float(RNG.choice([-0.5, -1.0, -2.0]))
        pts = exp_map_origin(Tensor(RNG.uniform(-2, 2, size=(t, d))), eta)
        ok, dev = manifold_check(pts.values, eta)
        assert ok, f"deviation {dev} at trial {trial}"


def test_exp_map_tiny_rows_stay_smooth():
    # rows straddle the series threshold; all must stay on-manifold
    v = np.array([[1e-9, 0.0], [1e-7, 1e-7], [1e-5, 0.0], [0.5, 0.5]])
    pts = exp_map_origin(Tensor(v), -1.0)
    ok, dev = manifold_check(pts.values, -1.0, tol=1e-12)
    assert ok, dev


def test_exp_map_gradient_matches_oracle():
    v0 = RNG.uniform(0.2, 1.5, size=(3, 4))
    probe = Tensor(RNG.normal(size=(3, 5)))

    def f(t: Tensor):
        return ad.mul(exp_map_origin(t, -1.0).values, probe).sum()

    v = Tensor(v0, requires_grad=True)
    backward(f(v))
    fd = finite_diff_grad(lambda t: f(t).item(), Tensor(v0))
    assert grad_close(v.grad, fd)


def test_exp_map_gradient_near_series_threshold():
    v0 = np.full((1, 3), 1e-7)
    v = Tensor(v0, requires_grad=True)
    backward(exp_map_origin(v, -1.0).values.sum())
    fd = finite_diff_grad(lambda t: float(np.sum(exp_map_origin(t, -1.0).values.data)), Tensor(v0), h=1e-9)
    assert grad_close(v.grad, fd, rtol=1e-3, atol=1e-6)


# ---------------------------------------------------------------------------
# lorentz_linear.

def test_lorentz_linear_output_on_manifold():
    for _ in range(50):
        pts = random_points(4, 5, eta=-1.0)
        w = Tensor(RNG.normal(size=(3, 5)))
        b = Tensor(RNG.normal(size=(1, 3)))
        out = lorentz_linear(pts, w, b)
        ok, dev = manifold_check(out.values, -1.0)
        assert ok, dev


def test_lorentz_linear_zero_map_gives_origin():
    pts = random_points(3, 4)
    out = lorentz_linear(pts, Tensor(np.zeros((2, 4))), Tensor(np.zeros((1, 2))))
    np.testing.assert_allclose(out.values.data, np.tile(origin(-1.0, 2), (3, 1)), atol=1e-15)


def test_lorentz_linear_gradient_matches_oracle():
    v0 = RNG.uniform(-1, 1, size=(2, 3))
    w0 = RNG.normal(size=(2, 3))
    b0 = RNG.normal(size=(1, 2))
    probe = Tensor(RNG.normal(size=(2, 3)))

    def run(vt, wt, bt):
        pts = exp_map_origin(vt, -1.0)
        return ad.mul(lorentz_linear(pts, wt, bt).values, probe).sum()

    v, w, b = (Tensor(a, requires_grad=True) for a in (v0, w0, b0))
    backward(run(v, w, b))
    for leaf, base, idx in ((v, v0, 0), (w, w0, 1), (b, b0, 2)):
        args = [Tensor(v0), Tensor(w0), Tensor(b0)]
        def f(t, args=args, idx=idx):
            args = list(args)
            args[idx] = t
            return run(*args).item()
        assert grad_close(leaf.grad, finite_diff_grad(f, Tensor(base))), f"leaf {idx}"


def test_lorentz_linear_shape_error():
    pts = random_points(2, 4)
    with pytest.raises(DimensionError, match="lorentz_linear"):
        lorentz_linear(pts, Tensor(np.zeros((3, 5))), Tensor(np.zeros((1, 3))))


# ---------------------------------------------------------------------------
# Distance.

def test_distance_to_self_is_zero_up_to_clamp():
    # the arccosh floor turns exact zeros into ~sqrt(2e-12)
    pts = random_points(5, 4)
    d = lorentz_distance(pts.values, pts.values, -1.0)
    assert np.all(d.data >= 0.0)
    assert np.all(d.data <= 2e-6)


def test_distance_known_value():
    # points (cosh a, sinh a, 0) and origin: distance a
    a = 0.8
    x = Tensor(np.array([[math.cosh(a), math.sinh(a), 0.0]]))
    o = Tensor(origin(-1.0, 2).reshape(1, 3))
    d = lorentz_distance(x, o, -1.0)
    assert d.item() == pytest.approx(a, abs=1e-9)


def test_distance_scales_with_curvature():
    a = 1.1
    eta = -4.0
    # exp map of |v| = a/2 at eta=-4 gives geodesic distance a/2... rescale:
    x = exp_map_origin(Tensor([[a, 0.0]]), eta)
    o = Tensor(origin(eta, 2).reshape(1, 3))
    d = lorentz_distance(x.values, o, eta)
    # r = sqrt(-eta)*a, distance = r / sqrt(-eta) = a
    assert d.item() == pytest.approx(a, abs=1e-9)


def test_distance_symmetry_nonnegativity_triangle():
    for _ in range(100):
        pts = random_points(3, 4).values
        x, y, z = (Tensor(pts.data[i : i + 1]) for i in range(3))
        dxy = lorentz_distance(x, y, -1.0).item()
        dyx = lorentz_distance(y, x, -1.0).item()
        dxz = lorentz_distance(x, z, -1.0).item()
        dyz = lorentz_distance(y, z, -1.0).item()
        assert dxy >= 0.0
        assert dxy == pytest.approx(dyx, abs=1e-10)
        assert dxz <= dxy + dyz + 1e-8


def test_distance_rejects_off_manifold_by_default():
    bad = Tensor(np.array([[1.5, 0.0, 0.0]]))
    good = Tensor(origin(-1.0, 2).reshape(1, 3))
    with pytest.raises(ContractError, match="lorentz_distance"):
        lorentz_distance(bad, good, -1.0)
    # validate=False exists for finite-difference probes
    lorentz_distance(bad, good, -1.0, validate=False)


def test_distance_gradient_matches_oracle():
    # pairs kept > 1e-3 apart so the arccosh branch point stays away
    va = RNG.uniform(0.5, 1.5, size=(3, 4))
    vb = -RNG.uniform(0.5, 1.5, size=(3, 4))

    def f(t: Tensor):
        x = exp_map_origin(t, -1.0)
        y = exp_map_origin(Tensor(vb), -1.0)
        return lorentz_distance(x.values, y.values, -1.0).sum()

    v = Tensor(va, requires_grad=True)
    backward(f(v))
    fd = finite_diff_grad(lambda t: f(t).item(), Tensor(va))
    assert grad_close(v.grad, fd)


def test_distance_matrix_matches_pairwise_and_zero_diagonal():
    pts = random_points(4, 3)
    mat = lorentz_distance_matrix(pts)
    assert mat.data.shape == (4, 4)
    np.testing.assert_array_equal(np.diag(mat.data), np.zeros(4))
    for i in range(4):
        for j in range(4):
            if i == j:
                continue
            xi = Tensor(pts.values.data[i : i + 1])
            xj = Tensor(pts.values.data[j : j + 1])
            expected = lorentz_distance(xi, xj, -1.0).item()
            assert mat.data[i, j] == pytest.approx(expected, abs=1e-12)


def test_points_constructor_rejects_junk():
    with pytest.raises(ContractError):
        LorentzPoints(Tensor(np.ones((2, 3))), -1.0)
    with pytest.raises(ContractError):
        exp_map_origin(Tensor(np.zeros((1, 2))), 1.0)
