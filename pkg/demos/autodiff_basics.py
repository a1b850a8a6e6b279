"""Tour of the tape-based tensor engine: build a graph, differentiate it,
and cross-check the gradients against central finite differences.

Run:  python demos/autodiff_basics.py
"""

import numpy as np

import lvad.autodiff as ad
from lvad.autodiff import Tensor, backward, finite_diff_grad, grad_close


def main():
    rng = np.random.default_rng(0)

    print("== a small computation graph ==")
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    w = Tensor(rng.normal(scale=0.5, size=(4, 2)), requires_grad=True)
    y = ad.matmul(x, w)
    z = ad.reduce_mean(ad.sigmoid(y))
    print(f"x {x.shape} @ w {w.shape} -> sigmoid -> mean = {z.item():.6f}")

    backward(z)
    print(f"dz/dx row 0: {np.round(x.grad[0], 5)}")
    print(f"dz/dw col 0: {np.round(w.grad[:, 0], 5)}")

    print("\n== the same gradient, measured numerically ==")

    def loss_of_w(candidate):
        return ad.reduce_mean(ad.sigmoid(ad.matmul(Tensor(x.data), candidate))).item()

    numeric = finite_diff_grad(loss_of_w, w)
    print(f"analytic vs numeric agree: {grad_close(w.grad, numeric)}")
    print(f"largest absolute difference {np.max(np.abs(w.grad - numeric)):.2e}")

    print("\n== gradients flow through branching and reuse ==")
    a = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True)
    reused = ad.mul(a, a)  # a appears twice; adjoints accumulate
    total = ad.reduce_sum(reused)
    backward(total)
    print(f"d(sum a*a)/da = 2a:\n{a.grad}")

    print("\n== taping pauses inside no_grad ==")
    with ad.no_grad():
        silent = ad.mul(a, a)
    print(f"result computed: {silent.data.tolist()}, requires_grad={silent.requires_grad}")

    print("\n== every registered op, by name ==")
    print(", ".join(ad.op_names()))


if __name__ == "__main__":
    main()
