"""Self-contained gradient verification: every registered op, then the
end-to-end training loss on a tiny bag, checked against central finite
differences.  Used by the command line and by the test suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import VideoFeatureBag
from .errors import ContractError
from .model import model_forward, named_model_params
from .training import TrainConfig, bag_loss, init_from_config


@dataclass
class CheckRecord:
    """One verified gradient: its name, worst violation ratio, verdict.

    The violation is |analytic - numeric| over the allowed bound, so any
    value <= 1 passes."""

    name: str
    violation: float
    passed: bool


def _kink_free(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """Uniform values in [-2, 2] pushed at least 0.06 away from zero, so
    finite differences never straddle a relu/leaky-relu corner."""
    x = rng.uniform(-2.0, 2.0, size=shape)
    lift = np.where(x >= 0.0, 0.08, -0.08)
    return np.where(np.abs(x) < 0.06, x + lift, x)


def _op_cases(rng: np.random.Generator) -> dict[str, tuple[list[np.ndarray], dict]]:
    span = lambda *s: rng.uniform(-2.0, 2.0, size=s)
    pos = lambda *s: rng.uniform(0.5, 2.5, size=s)
    return {
        "add": ([span(3, 4), span(3, 4)], {}),
        "sub": ([span(3, 4), span(3, 4)], {}),
        "elementwise-mul": ([span(3, 4), span(3, 4)], {}),
        "matmul": ([span(3, 4), span(4, 2)], {}),
        "scalar-mul": ([span(3, 4)], {"factor": 0.7}),
        "concat": ([span(2, 3), span(3, 3)], {"axis": 0}),
        "slice": ([span(4, 3)], {"key": ([0, 2, 3], slice(None))}),
        "transpose": ([span(3, 4)], {}),
        "sum": ([span(3, 4)], {"axis": 0, "keepdims": True}),
        "mean": ([span(3, 4)], {"axis": 1, "keepdims": True}),
        "squared-norm": ([span(3, 4)], {"axis": 1, "keepdims": True}),
        "exp": ([span(3, 4)], {}),
        "log": ([pos(3, 4)], {}),
        "sqrt": ([pos(3, 4)], {}),
        "sigmoid": ([span(3, 4)], {}),
        "softmax": ([span(3, 4)], {"axis": 1}),
        "gelu": ([span(3, 4)], {}),
        "relu": ([_kink_free(rng, 3, 4)], {}),
        "leaky-relu": ([_kink_free(rng, 3, 4)], {"slope": -2.0}),
        "arccosh": ([rng.uniform(1.1, 3.0, size=(3, 4))], {}),
        "cosh": ([span(3, 4)], {}),
        "sinh": ([span(3, 4)], {}),
        "dropout": ([span(3, 4)], {"rate": 0.3, "training": False}),
    }


def op_gradient_checks(seed: int = 0, tol: float = 1e-4) -> list[CheckRecord]:
    """Check each registered op against finite differences under a random
    linear head (a plain sum would blind the check to softmax and friends)."""
    rng = np.random.default_rng(seed)
    cases = _op_cases(rng)
    missing = set(ad.op_names()) - set(cases)
    if missing:
        raise ContractError(f"op_gradient_checks: no case for ops {sorted(missing)}")
    records = []
    for name in ad.op_names():
        arrays, attrs = cases[name]
        tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
        out = ad.forward_op(name, tensors, attrs)
        head = rng.normal(size=out.shape)
        ad.backward(ad.reduce_sum(ad.mul(out, Tensor(head))))
        worst = 0.0
        for i in range(len(tensors)):
            def value_at(probe: Tensor, i: int = i) -> float:
                alt = [Tensor(t.data) for t in tensors]
                alt[i] = probe
                return float(np.sum(ad.forward_op(name, alt, attrs).data * head))

            fd = ad.finite_diff_grad(value_at, Tensor(tensors[i].data.copy()))
            worst = max(worst, ad.grad_max_violation(tensors[i].grad, fd, rtol=tol))
        records.append(CheckRecord(name, worst, worst <= 1.0))
    return records


def end_to_end_check(seed: int = 0, tol: float = 1e-4) -> CheckRecord:
    """Full pipeline loss on a T=3 bag, dropout off, every parameter and
    both feature inputs checked against finite differences."""
    rng = np.random.default_rng(seed)
    config = TrainConfig(dropout=0.0, heads=2, prefix_dim=2, adapter_width=5, batch_size=1)
    d_v, d_a, t = 6, 4, 3
    params = init_from_config(d_v, d_a, config, rng)
    visual = rng.normal(scale=0.8, size=(t, d_v))
    audio = rng.normal(scale=0.8, size=(t, d_a))
    bag = VideoFeatureBag("gradcheck", visual.astype(np.float32), audio.astype(np.float32), 1)

    with ad.no_grad():
        scores = model_forward(Tensor(bag.visual), Tensor(bag.audio), params)
    ordered = np.sort(scores.data[:, 0])[::-1]
    if ordered[0] - ordered[1] < 1e-3:
        raise ContractError("end_to_end_check: top-k tie; the check needs a different seed")

    named = named_model_params(params)
    for tensor in named.values():
        tensor.requires_grad = True
    ad.backward(bag_loss(params, bag, config, training=False, rng=None))

    def loss_value() -> float:
        return float(bag_loss(params, bag, config, training=False, rng=None).item())

    worst = 0.0
    for name, tensor in named.items():
        def value_at(probe: Tensor, tensor: Tensor = tensor) -> float:
            saved = tensor.data
            tensor.data = probe.data.reshape(saved.shape)
            try:
                return loss_value()
            finally:
                tensor.data = saved

        fd = ad.finite_diff_grad(value_at, Tensor(tensor.data.copy()))
        worst = max(worst, ad.grad_max_violation(tensor.grad, fd, rtol=tol))
    return CheckRecord("end-to-end", worst, worst <= 1.0)


def run_gradient_checks(seed: int = 0, tol: float = 1e-4) -> list[CheckRecord]:
    """Op suite plus the end-to-end check, in a stable order."""
    records = op_gradient_checks(seed, tol)
    records.append(end_to_end_check(seed, tol))
    return records
