import numpy as np

from oplu_net import (
    DenseLayer,
    DenseNet,
    Rng,
    SequenceSample,
    init_dense,
    init_srn,
)
from oplu_net.activations import make_activation
from oplu_net.diagnostics import draw_smooth_sample


def build_mlp(widths, activation, loss="mse", init="xavier", seed=0):
    return init_dense(widths, activation, loss, init, Rng(seed))


def build_srn(hidden, activation, init="xavier", seed=0, input_dim=2, output_dim=1):
    return init_srn(input_dim, hidden, output_dim, make_activation(activation, hidden),
                    init, Rng(seed))


def smooth_mlp_sample(net, seed=0, gap=1e-3):
    """Random (x, target) pair whose forward pass avoids activation kinks."""
    rng = Rng(seed)

    def make(r):
        return (r.uniform_array(net.input_dim, -1, 1),
                r.uniform_array(net.output_dim, -1, 1))

    return draw_smooth_sample(net, rng, make, min_gap=gap)


def smooth_srn_sample(net, steps, seed=0, gap=1e-3):
    rng = Rng(seed)

    def make(r):
        inputs = r.uniform_array(steps * net.input_dim, -1, 1).reshape(steps, net.input_dim)
        return SequenceSample(inputs, r.uniform_array(net.output_dim))

    return draw_smooth_sample(net, rng, make, min_gap=gap)


def orthogonal_oplu_net(depth, width, seed=0, loss="mse"):
    """All-orthogonal, zero-bias, all-pairwise-permutation stack."""
    from oplu_net import random_orthogonal

    rng = Rng(seed)
    layers = [
        DenseLayer(random_orthogonal(width, rng), np.zeros(width), make_activation("oplu", width))
        for _ in range(depth)
    ]
    return DenseNet(layers, loss)
