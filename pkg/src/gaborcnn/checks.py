"""Finite-difference verification of the hand-derived backward passes."""

from __future__ import annotations

import numpy as np

from .gabor import GaborParams, build_bank
from .gof import GofLayer
from .network import Network, build_network, softmax_cross_entropy
from .optim import OptimizerConfig
from .tensors import Tensor4
from .verify import fd_gradient, relative_error


def layer_gradcheck(
    num_orientations: int,
    kernel_size: int,
    num_filters: int = 2,
    in_depth: int = 2,
    num_scales: int = 1,
    scale_index: int = 1,
    input_size: int = 6,
    seed: int = 0,
    step: float = 1e-5,
) -> float:
    """Max relative error of the layer's learned-filter and input gradients.

    Loss is the sum of squared outputs, so the output gradient is 2*output.
    """
    rng = np.random.default_rng(seed)
    bank = build_bank(GaborParams(num_orientations, num_scales, kernel_size))
    layer = GofLayer(num_filters, in_depth, bank, scale_index, rng=rng)
    x = rng.standard_normal((1, in_depth, input_size, input_size))

    def loss() -> float:
        out = layer.forward(Tensor4(x)).data
        return float(np.sum(out**2))

    out = layer.forward(Tensor4(x)).data
    grad_in, grad_learned = layer.backward(Tensor4(2.0 * out))
    err = relative_error(grad_learned, fd_gradient(loss, layer.learned, step))
    err_in = relative_error(grad_in.data, fd_gradient(loss, x, step))
    return max(err, err_in)


def whole_net_gradcheck(
    num_orientations: int,
    kernel_size: int,
    widths: tuple[int, int] = (2, 2),
    input_size: int = 8,
    num_scales: int = 1,
    seed: int = 0,
    step: float = 1e-5,
) -> float:
    """Max relative error over every parameter tensor of a 2-layer micro-net."""
    arch = {
        "type": "gcn",
        "widths": list(widths),
        "kernel": kernel_size,
        "orientations": num_orientations,
        "scales": num_scales,
        "dropout": 0.0,
        "num_classes": 3,
        "input_channels": 1,
        "input_size": input_size,
    }
    net = build_network(arch, seed=seed)
    rng = np.random.default_rng(seed + 1)
    # zero-init biases put ReLU inputs exactly on the kink (dead receptive
    # fields), where central differences disagree with the subgradient;
    # jitter them so the check probes a differentiable neighborhood
    for layer in net.layers:
        if hasattr(layer, "bias"):
            layer.bias += 0.1 * rng.standard_normal(layer.bias.shape)
    x = rng.standard_normal((2, 1, input_size, input_size))
    labels = rng.integers(0, 3, size=2)

    def loss() -> float:
        logits = net.forward(Tensor4(x), training=False)
        return softmax_cross_entropy(logits, labels)[0]

    net.loss_and_grad(Tensor4(x), labels)
    worst = 0.0
    for layer in net.layers:
        if isinstance(layer, GofLayer):
            pairs = [(layer.learned, layer.grad_learned), (layer.bias, layer.grad_bias)]
        elif hasattr(layer, "weight"):
            pairs = [(layer.weight, layer.grad_weight), (layer.bias, layer.grad_bias)]
        else:
            continue
        for param, grad in pairs:
            worst = max(worst, relative_error(grad, fd_gradient(loss, param, step)))
    return worst


def run_gradcheck(
    num_orientations: int,
    kernel_size: int,
    num_scales: int = 1,
    seeds: range | list | None = None,
    tolerance: float = 1e-5,
) -> dict:
    """Layer plus whole-net checks over several seeds; JSON-ready report."""
    if seeds is None:
        seeds = range(3)
    results = []
    for seed in seeds:
        results.append(
            {
                "seed": int(seed),
                "layer_rel_err": layer_gradcheck(
                    num_orientations, kernel_size, num_scales=num_scales, seed=seed
                ),
                "net_rel_err": whole_net_gradcheck(
                    num_orientations, kernel_size, num_scales=num_scales, seed=seed
                ),
            }
        )
    worst = max(max(r["layer_rel_err"], r["net_rel_err"]) for r in results)
    return {
        "schema": "gradcheck-v1",
        "orientations": num_orientations,
        "kernel": kernel_size,
        "scales": num_scales,
        "tolerance": tolerance,
        "results": results,
        "max_rel_err": worst,
        "passed": bool(worst <= tolerance),
    }
