"""Layer stack, loss, optimizer loop and checkpointing.

Networks are plain ordered layer lists operating on Tensor4 batches. The
classifier head is softmax cross-entropy. Training uses Adadelta with a
halving learning-rate schedule; plain SGD is available for the literal
update-rule tests. All randomness flows from explicit seeds.
"""

from __future__ import annotations

import io
import json
import time
import zipfile
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .gabor import GaborParams, build_bank
from .gof import GofLayer
from .optim import OptimizerConfig, ParamState, apply_update
from .tensors import (
    Tensor4,
    correlate2d_filter_grad,
    correlate2d_input_grad,
    correlate2d_raw,
)


@dataclass
class TrainSchedule:
    epochs: int
    batch_size: int = 128
    initial_lr: float = 0.001
    weight_decay: float = 0.00005
    halving_period_epochs: int = 25

    def __post_init__(self):
        if self.batch_size < 1 or self.halving_period_epochs < 1:
            raise ConfigError("batch_size and halving_period_epochs must be positive")
        if self.initial_lr <= 0 or self.weight_decay < 0 or self.epochs < 0:
            raise ConfigError("invalid schedule values")

    def lr_at(self, epoch: int) -> float:
        return self.initial_lr * 0.5 ** (epoch // self.halving_period_epochs)


# --------------------------------------------------------------------------
# Layers
# --------------------------------------------------------------------------


class ReLU:
    def forward(self, x: Tensor4, training: bool = False) -> Tensor4:
        self._mask = x.data > 0
        return Tensor4(x.data * self._mask, orient_groups=x.orient_groups)

    def backward(self, grad: Tensor4) -> Tensor4:
        return Tensor4(grad.data * self._mask, orient_groups=grad.orient_groups)

    def apply_update(self, cfg, lr):
        pass

    def param_counts(self):
        return 0, 0


class MaxPool2x2:
    """2x2 max pooling, stride 2. Odd trailing rows/cols are dropped.

    Ties go to the first maximum in row-major order within the window.
    """

    def forward(self, x: Tensor4, training: bool = False) -> Tensor4:
        n, c, h, w = x.data.shape
        h2, w2 = h // 2, w // 2
        cropped = x.data[:, :, : h2 * 2, : w2 * 2]
        win = cropped.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5)
        flat = win.reshape(n, c, h2, w2, 4)
        self._argmax = np.argmax(flat, axis=-1)
        self._in_shape = (n, c, h, w)
        out = np.take_along_axis(flat, self._argmax[..., None], axis=-1)[..., 0]
        return Tensor4(out, orient_groups=x.orient_groups)

    def backward(self, grad: Tensor4) -> Tensor4:
        n, c, h, w = self._in_shape
        h2, w2 = h // 2, w // 2
        flat = np.zeros((n, c, h2, w2, 4))
        np.put_along_axis(flat, self._argmax[..., None], grad.data[..., None], axis=-1)
        full = flat.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        out = np.zeros((n, c, h, w))
        out[:, :, : h2 * 2, : w2 * 2] = full.reshape(n, c, h2 * 2, w2 * 2)
        return Tensor4(out, orient_groups=grad.orient_groups)

    def apply_update(self, cfg, lr):
        pass

    def param_counts(self):
        return 0, 0


class Dropout:
    """Inverted dropout; identity outside training."""

    def __init__(self, p: float, seed: int = 0):
        if not 0.0 <= p < 1.0:
            raise ConfigError(f"dropout p must be in [0,1), got {p}")
        self.p = p
        self.rng = np.random.default_rng(seed)

    def forward(self, x: Tensor4, training: bool = False) -> Tensor4:
        if not training or self.p == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.p
        self._mask = (self.rng.random(x.data.shape) < keep) / keep
        return Tensor4(x.data * self._mask, orient_groups=x.orient_groups)

    def backward(self, grad: Tensor4) -> Tensor4:
        if self._mask is None:
            return grad
        return Tensor4(grad.data * self._mask, orient_groups=grad.orient_groups)

    def apply_update(self, cfg, lr):
        pass

    def param_counts(self):
        return 0, 0


class FullyConnected:
    """Dense layer over the flattened feature map."""

    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng(0)
        # 1/sqrt(fan_in) keeps untrained logits close to zero, so a fresh
        # classifier predicts near-uniformly (loss ~= ln num_classes)
        bound = 1.0 / np.sqrt(in_features)
        self.weight = rng.uniform(-bound, bound, size=(in_features, out_features))
        self.bias = np.zeros(out_features)
        self.state = ParamState(self.weight.shape)
        self.bias_state = ParamState(self.bias.shape)

    def forward(self, x: Tensor4, training: bool = False) -> Tensor4:
        n = x.data.shape[0]
        self._in_shape = x.data.shape
        flat = x.data.reshape(n, -1)
        if flat.shape[1] != self.weight.shape[0]:
            raise ShapeError(
                f"flattened input {flat.shape} incompatible with weight "
                f"{self.weight.shape}"
            )
        self._input = flat
        out = flat @ self.weight + self.bias
        return Tensor4(out[:, :, None, None])

    def backward(self, grad: Tensor4) -> Tensor4:
        g = grad.data[:, :, 0, 0]
        self.grad_weight = self._input.T @ g
        self.grad_bias = g.sum(axis=0)
        grad_in = (g @ self.weight.T).reshape(self._in_shape)
        return Tensor4(grad_in)

    def apply_update(self, cfg: OptimizerConfig, lr: float):
        gw = self.grad_weight
        if cfg.weight_decay:
            gw = gw + cfg.weight_decay * self.weight
        apply_update(self.weight, gw, self.state, cfg, lr)
        apply_update(self.bias, self.grad_bias, self.bias_state, cfg, lr)

    def param_counts(self):
        n = self.weight.size
        return n, n


class PlainConv:
    """Ordinary convolution layer, the GCN-free baseline."""

    def __init__(self, num_filters: int, in_depth: int, kernel_size: int,
                 pad: int = 0, rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng(0)
        k = kernel_size
        bound = np.sqrt(6.0 / ((in_depth + num_filters) * k * k))
        self.weight = rng.uniform(-bound, bound, size=(num_filters, in_depth, k, k))
        self.bias = np.zeros(num_filters)
        self.pad = pad
        self.state = ParamState(self.weight.shape)
        self.bias_state = ParamState(self.bias.shape)

    def forward(self, x: Tensor4, training: bool = False) -> Tensor4:
        if x.data.shape[1] != self.weight.shape[1]:
            raise ShapeError(
                f"input channels {x.data.shape[1]} != filter depth "
                f"{self.weight.shape[1]}"
            )
        self._input = x.data
        out = correlate2d_raw(x.data, self.weight, self.pad)
        out += self.bias[None, :, None, None]
        return Tensor4(out)

    def backward(self, grad: Tensor4) -> Tensor4:
        g = grad.data
        self.grad_weight = correlate2d_filter_grad(
            self._input, g, self.pad, self.weight.shape[2:]
        )
        self.grad_bias = g.sum(axis=(0, 2, 3))
        grad_in = correlate2d_input_grad(g, self.weight, self.pad, self._input.shape[2:])
        return Tensor4(grad_in)

    def apply_update(self, cfg: OptimizerConfig, lr: float):
        gw = self.grad_weight
        if cfg.weight_decay:
            gw = gw + cfg.weight_decay * self.weight
        apply_update(self.weight, gw, self.state, cfg, lr)
        apply_update(self.bias, self.grad_bias, self.bias_state, cfg, lr)

    def param_counts(self):
        n = self.weight.size
        return n, n


# --------------------------------------------------------------------------
# Loss
# --------------------------------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and gradient w.r.t. logits."""
    n = logits.shape[0]
    if labels.shape[0] != n:
        raise ShapeError(f"{n} logits rows vs {labels.shape[0]} labels")
    probs = softmax(logits)
    eps = 1e-300  # guards log(0) only; never perturbs realistic probabilities
    loss = -np.mean(np.log(probs[np.arange(n), labels] + eps))
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


# --------------------------------------------------------------------------
# Network
# --------------------------------------------------------------------------


class Network:
    def __init__(self, layers: list, arch: dict | None = None):
        self.layers = layers
        self.arch = arch or {}

    def forward(self, x: Tensor4, training: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, training)
        return x.data[:, :, 0, 0]

    def loss_and_grad(self, x: Tensor4, labels: np.ndarray) -> float:
        """Forward in training mode, backprop, leave grads cached per layer."""
        logits = self.forward(x, training=True)
        loss, grad_logits = softmax_cross_entropy(logits, labels)
        grad = Tensor4(grad_logits[:, :, None, None])
        for layer in reversed(self.layers):
            out = layer.backward(grad)
            grad = out[0] if isinstance(out, tuple) else out
        return loss

    def apply_updates(self, cfg: OptimizerConfig, lr: float):
        for layer in self.layers:
            layer.apply_update(cfg, lr)

    def predict(self, x: Tensor4) -> np.ndarray:
        return np.argmax(self.forward(x, training=False), axis=1)


def count_params(net: Network) -> dict:
    """Persisted vs effective weight counts per layer and in total."""
    rows = []
    for i, layer in enumerate(net.layers):
        persisted, effective = layer.param_counts()
        rows.append(
            {
                "layer": i,
                "kind": type(layer).__name__,
                "persisted": persisted,
                "effective": effective,
            }
        )
    conv = [r for r in rows if r["kind"] in ("GofLayer", "PlainConv")]
    return {
        "layers": rows,
        "total_persisted": sum(r["persisted"] for r in rows),
        "total_effective": sum(r["effective"] for r in rows),
        "conv_persisted": sum(r["persisted"] for r in conv),
        "conv_effective": sum(r["effective"] for r in conv),
    }


# --------------------------------------------------------------------------
# Architecture builder
# --------------------------------------------------------------------------


def scale_for_layer(layer_index: int, num_gcn_layers: int, num_scales: int) -> int:
    """Monotone layer-to-scale map: v = min(V, 1 + floor(l*V/L))."""
    return min(num_scales, 1 + (layer_index * num_scales) // num_gcn_layers)


def build_network(arch: dict, seed: int = 0) -> Network:
    """Construct a GCN or baseline CNN stack from an architecture dict.

    Keys: type (gcn|cnn), widths, kernel, orientations, scales, dropout,
    num_classes, input_channels, input_size, sigma and fc_hidden (optional).
    Each stage is conv -> ReLU -> 2x2 max-pool with same-padding; the head is
    one fully connected layer followed by dropout, then softmax outside.
    With fc_hidden > 0 the head widens to FC -> ReLU -> dropout -> classifier.
    """
    kind = arch.get("type", "gcn")
    widths = list(arch["widths"])
    k = int(arch.get("kernel", 3))
    num_classes = int(arch.get("num_classes", 10))
    in_channels = int(arch.get("input_channels", 1))
    size = int(arch.get("input_size", 28))
    dropout_p = float(arch.get("dropout", 0.5))
    pad = k // 2
    rng = np.random.default_rng(seed)

    layers: list = []
    channels = in_channels
    if kind == "gcn":
        U = int(arch.get("orientations", 4))
        V = int(arch.get("scales", 4))
        sigma = float(arch.get("sigma", 2 * np.pi))
        bank = build_bank(GaborParams(U, V, k, sigma))
        groups = 1
        for i, m in enumerate(widths):
            v = scale_for_layer(i, len(widths), V)
            gof = GofLayer(m, channels, bank, v, in_orient_groups=groups,
                           pad=pad, rng=rng)
            # learned filters are initialized 1/rms(G_v) larger than a plain
            # fan bound (so modulated filters keep unit-variance activations);
            # scale their step size to match, else Adadelta's epsilon floor
            # leaves the deeper layers effectively frozen
            gof.lr_scale = 1.0 / float(
                np.sqrt(np.mean(bank.kernels[:, v - 1] ** 2))
            )
            layers.append(gof)
            layers.append(ReLU())
            layers.append(MaxPool2x2())
            channels = m * U
            groups = U
            size = size // 2
    elif kind == "cnn":
        for m in widths:
            layers.append(PlainConv(m, channels, k, pad=pad, rng=rng))
            layers.append(ReLU())
            layers.append(MaxPool2x2())
            channels = m
            size = size // 2
    else:
        raise ConfigError(f"unknown network type {kind!r}")

    if size < 1:
        raise ConfigError("too many pooling stages for the input size")
    fc_hidden = int(arch.get("fc_hidden", 0))
    features = channels * size * size
    if fc_hidden > 0:
        layers.append(FullyConnected(features, fc_hidden, rng=rng))
        layers.append(ReLU())
        if dropout_p > 0:
            layers.append(Dropout(dropout_p, seed=seed + 1))
        layers.append(FullyConnected(fc_hidden, num_classes, rng=rng))
    else:
        layers.append(FullyConnected(features, num_classes, rng=rng))
        if dropout_p > 0:
            layers.append(Dropout(dropout_p, seed=seed + 1))
    return Network(layers, arch=dict(arch))


# --------------------------------------------------------------------------
# Training loop
# --------------------------------------------------------------------------


def iter_batches(n: int, batch_size: int, rng: np.random.Generator | None):
    order = np.arange(n) if rng is None else rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def train_epoch(
    net: Network,
    images: np.ndarray,
    labels: np.ndarray,
    schedule: TrainSchedule,
    epoch: int,
    cfg: OptimizerConfig,
    shuffle_rng: np.random.Generator,
) -> dict:
    """One pass over the data; returns loss/time metrics."""
    if images.shape[0] == 0:
        raise ConfigError("empty training set")
    lr = schedule.lr_at(epoch)
    t0 = time.monotonic()
    losses = []
    for idx in iter_batches(images.shape[0], schedule.batch_size, shuffle_rng):
        batch = Tensor4(images[idx])
        loss = net.loss_and_grad(batch, labels[idx])
        net.apply_updates(cfg, lr)
        losses.append(loss)
    return {
        "epoch": epoch,
        "lr": lr,
        "train_loss": float(np.mean(losses)),
        "seconds": time.monotonic() - t0,
    }


def evaluate(net: Network, images: np.ndarray, labels: np.ndarray,
             batch_size: int = 256) -> float:
    """Classification error rate; never mutates parameters."""
    if images.shape[0] == 0:
        raise ConfigError("empty evaluation set")
    wrong = 0
    for start in range(0, images.shape[0], batch_size):
        stop = start + batch_size
        pred = net.predict(Tensor4(images[start:stop]))
        wrong += int(np.sum(pred != labels[start:stop]))
    return wrong / images.shape[0]


# --------------------------------------------------------------------------
# Checkpointing
# --------------------------------------------------------------------------


def _fixed_entry(name: str) -> zipfile.ZipInfo:
    # constant timestamp keeps checkpoints bit-identical across reruns
    return zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))


def save_checkpoint(net: Network, path: str, meta: dict | None = None):
    meta = dict(meta or {})
    meta["arch"] = net.arch
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr(_fixed_entry("meta.json"), json.dumps(meta, indent=2, sort_keys=True))
        for i, layer in enumerate(net.layers):
            if isinstance(layer, GofLayer):
                zf.writestr(_fixed_entry(f"layer_{i:02d}.gof"), layer.save_bytes())
            elif isinstance(layer, (PlainConv, FullyConnected)):
                buf = io.BytesIO()
                np.savez(buf, weight=layer.weight, bias=layer.bias)
                zf.writestr(_fixed_entry(f"layer_{i:02d}.npz"), buf.getvalue())


def load_checkpoint(path: str) -> tuple[Network, dict]:
    with zipfile.ZipFile(path, "r") as zf:
        meta = json.loads(zf.read("meta.json"))
        net = build_network(meta["arch"], seed=int(meta.get("seed", 0)))
        for i, layer in enumerate(net.layers):
            if isinstance(layer, GofLayer):
                loaded = GofLayer.load_bytes(zf.read(f"layer_{i:02d}.gof"))
                layer.learned = loaded.learned
                layer.bias = loaded.bias
            elif isinstance(layer, (PlainConv, FullyConnected)):
                blob = np.load(io.BytesIO(zf.read(f"layer_{i:02d}.npz")))
                layer.weight = blob["weight"]
                layer.bias = blob["bias"]
    return net, meta
