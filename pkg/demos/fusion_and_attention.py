"""See the two halves of the model up close: the audio-visual fusion block
(cross attention, bottleneck adapter, modulation gate) and the hyperbolic
graph-attention stage that turns fused rows into scores.

Run:  python demos/fusion_and_attention.py
"""

import numpy as np

from lvad.autodiff import Tensor
from lvad.fusion import cfa_forward, init_cfa_params, modulation, named_cfa_params
from lvad.graph_attn import build_adjacency, hlgatt_forward, init_hlgatt_params
from lvad.lorentz import exp_map_origin
from lvad.model import init_model_params, model_forward


def randomized_cfa(d_v, d_a, seed):
    params = init_cfa_params(d_v, d_a, heads=2, prefix_dim=3, adapter_width=6,
                             dropout_rate=0.0, rng=np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 1)
    for tensor in named_cfa_params(params).values():
        tensor.data = rng.normal(scale=0.4, size=tensor.data.shape)
    return params


def main():
    rng = np.random.default_rng(3)
    t, d_v, d_a = 6, 8, 4

    visual = Tensor(rng.normal(size=(t, d_v)))
    audio = Tensor(rng.normal(size=(t, d_a)))
    # make snippets 2 and 3 audibly loud
    audio.data[2:4] += 3.0

    print("== the modulation gate reads audio, snippet by snippet ==")
    params = randomized_cfa(d_v, d_a, seed=7)
    gate = modulation(audio, params).data
    for i, row in enumerate(gate):
        marker = " <- loud" if i in (2, 3) else ""
        print(f"snippet {i}: mean gate {row.mean():.3f}{marker}")
    print("(random weights here; training decides which audio opens the gate)")

    print("\n== gate off versus gate on ==")
    fused_on = cfa_forward(visual, audio, params).data
    fused_off = cfa_forward(visual, audio, params, gate_off=True).data
    shift = np.linalg.norm(fused_on - fused_off, axis=1)
    print("per-snippet norm of the audio contribution to the fused rows:")
    print(np.round(shift, 3))

    print("\n== adjacency from intrinsic distances ==")
    points = exp_map_origin(Tensor(rng.normal(scale=0.7, size=(5, 4))), -1.0)
    adjacency = build_adjacency(points).data
    print("rows are stochastic, the diagonal dominates:")
    print(np.round(adjacency, 3))
    print(f"row sums: {np.round(adjacency.sum(axis=1), 12)}")

    print("\n== the graph stage keeps snippet identity ==")
    graph = init_hlgatt_params(d_v, layers=2, epsilon=1e-6, slope=-2.0,
                               gamma_init=1.0, rng=np.random.default_rng(9))
    features = hlgatt_forward(Tensor(fused_on), graph, -1.0).data
    print(f"fused {fused_on.shape} -> features {features.shape}")
    print(f"feature row norms: {np.round(np.linalg.norm(features, axis=1), 3)}")

    print("\n== end to end, random weights: scores per snippet ==")
    model = init_model_params(d_v, d_a, heads=2, prefix_dim=3, adapter_width=6,
                              dropout=0.0, layers=2, epsilon=1e-6, slope=-2.0,
                              gamma_init=1.0, curvature=-1.0,
                              rng=np.random.default_rng(11))
    scores = model_forward(visual, audio, model).data[:, 0]
    print(np.round(scores, 4))
    print("(untrained weights; training is what makes these scores meaningful)")


if __name__ == "__main__":
    main()
