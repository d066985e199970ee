"""Gabor-modulated convolution layer.

A layer stores a small set of learned filters (M filters of depth D). At
compute time each learned filter is expanded into U orientation copies by an
element-wise product with the fixed Gabor kernels of one scale, and the
expanded stack drives an ordinary cross-correlation. Only the learned filters
(and per-output-channel biases) are trainable; the Gabor kernels never
receive gradient. Persisted weights are therefore U times fewer than the
filters actually applied.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ConfigError, ShapeError
from .gabor import GaborBank, GaborParams, build_bank
from .optim import OptimizerConfig, ParamState, apply_update
from .tensors import (
    Tensor4,
    correlate2d_filter_grad,
    correlate2d_input_grad,
    correlate2d_raw,
)

MAGIC = b"GOF1"


def init_bound(
    in_depth: int, num_orientations: int, kernel_size: int, gabor_rms: float = 1.0
) -> float:
    """Fan-based uniform init bound for the learned filters.

    `gabor_rms` is the root-mean-square of the modulating kernels at the
    layer's scale; dividing by it keeps the variance of the *modulated*
    filters at the fan-based level, so activations neither vanish nor blow
    up as depth grows (the learned filters absorb the kernel scale).
    """
    fan = (in_depth + num_orientations) * kernel_size * kernel_size
    return np.sqrt(6.0 / fan) / gabor_rms


class GofLayer:
    """M learned filters modulated into M*U orientation filters at scale v."""

    def __init__(
        self,
        num_filters: int,
        in_depth: int,
        bank: GaborBank,
        scale_index: int,
        in_orient_groups: int = 1,
        pad: int = 0,
        stride: int = 1,
        rng: np.random.Generator | None = None,
    ):
        params = bank.params
        if not 1 <= scale_index <= params.num_scales:
            raise ConfigError(
                f"scale_index {scale_index} outside bank scales 1..{params.num_scales}"
            )
        self.bank = bank
        self.v = scale_index
        self.U = params.num_orientations
        self.M = num_filters
        self.D = in_depth
        self.W = params.kernel_size
        self.in_orient_groups = in_orient_groups
        self.pad = pad
        self.stride = stride

        gabor_rms = float(np.sqrt(np.mean(bank.kernels[:, self.v - 1] ** 2)))
        bound = init_bound(self.D, self.U, self.W, gabor_rms)
        if rng is None:
            rng = np.random.default_rng(0)
        self.learned = rng.uniform(-bound, bound, size=(self.M, self.D, self.W, self.W))
        self.bias = np.zeros(self.M * self.U)
        self.state = ParamState(self.learned.shape)
        self.bias_state = ParamState(self.bias.shape)
        # multiplier on the learning rate for the learned filters only;
        # network assembly sets it to match the init scale of each layer
        self.lr_scale = 1.0

        self._input: np.ndarray | None = None
        self.grad_learned: np.ndarray | None = None
        self.grad_bias: np.ndarray | None = None

    # --- expansion ---------------------------------------------------

    def modulate(self) -> np.ndarray:
        """Expand learned filters to the (M, U, D, W, W) modulated stack."""
        g = self.bank.kernels[:, self.v - 1]  # (U, W, W)
        if g.shape[-1] != self.learned.shape[-1]:
            raise ConfigError(
                f"bank kernel size {g.shape[-1]} != learned filter size "
                f"{self.learned.shape[-1]}"
            )
        return self.learned[:, None] * g[None, :, None]

    # --- forward / backward -------------------------------------------

    def forward(self, x: Tensor4, training: bool = False) -> Tensor4:
        if x.data.shape[1] != self.D:
            raise ShapeError(
                f"input channels {x.data.shape[1]} != layer depth {self.D}"
            )
        groups = x.orient_groups or 1
        if groups != self.in_orient_groups:
            raise ShapeError(
                f"input orient groups {groups} != expected {self.in_orient_groups}"
            )
        filters = self.modulate().reshape(self.M * self.U, self.D, self.W, self.W)
        out = correlate2d_raw(x.data, filters, self.pad, self.stride)
        out += self.bias[None, :, None, None]
        self._input = x.data
        return Tensor4(out, orient_groups=self.U)

    def backward(self, grad_out: Tensor4) -> tuple[Tensor4, np.ndarray]:
        """Gradients w.r.t. input and learned filters; grads cached for update.

        The modulated stack gets the ordinary correlation filter-gradient;
        collapsing it back onto the learned filters multiplies each
        orientation slice by its Gabor kernel again and sums over u.
        """
        if self._input is None:
            raise ShapeError("backward called before forward")
        if self.stride != 1:
            raise ConfigError("backward supports stride 1 only")
        g = grad_out.data
        expected_c = self.M * self.U
        if g.shape[1] != expected_c or g.shape[0] != self._input.shape[0]:
            raise ShapeError(
                f"grad shape {g.shape} inconsistent with forward "
                f"(batch {self._input.shape[0]}, channels {expected_c})"
            )
        grad_mod = correlate2d_filter_grad(
            self._input, g, self.pad, (self.W, self.W)
        ).reshape(self.M, self.U, self.D, self.W, self.W)
        gabor = self.bank.kernels[:, self.v - 1]  # (U, W, W)
        self.grad_learned = np.einsum("iudhw,uhw->idhw", grad_mod, gabor)
        self.grad_bias = g.sum(axis=(0, 2, 3))
        filters = self.modulate().reshape(self.M * self.U, self.D, self.W, self.W)
        grad_in = correlate2d_input_grad(
            g, filters, self.pad, self._input.shape[2:]
        )
        return Tensor4(grad_in, orient_groups=self.in_orient_groups or None), self.grad_learned

    # --- update & bookkeeping -----------------------------------------

    def apply_update(self, cfg: OptimizerConfig, lr: float,
                     grad_learned: np.ndarray | None = None,
                     grad_bias: np.ndarray | None = None) -> None:
        """Consume gradients (given or cached by backward). Bank untouched;
        weight decay hits the learned filters only."""
        gl = self.grad_learned if grad_learned is None else grad_learned
        gb = self.grad_bias if grad_bias is None else grad_bias
        if gl is None:
            raise ShapeError("no gradient available for update")
        if gl.shape != self.learned.shape:
            raise ShapeError(
                f"grad shape {gl.shape} != learned shape {self.learned.shape}"
            )
        if cfg.weight_decay:
            gl = gl + cfg.weight_decay * self.learned
        apply_update(self.learned, gl, self.state, cfg, lr * self.lr_scale)
        if gb is not None:
            apply_update(self.bias, gb, self.bias_state, cfg, lr)

    def param_counts(self) -> tuple[int, int]:
        """(persisted, effective) convolution weight counts, biases excluded."""
        persisted = self.M * self.D * self.W * self.W
        return persisted, persisted * self.U

    # --- serialization -------------------------------------------------

    def save_bytes(self) -> bytes:
        p = self.bank.params
        header = MAGIC + struct.pack(
            "<7i d",
            p.num_orientations,
            p.num_scales,
            p.kernel_size,
            self.v,
            self.M,
            self.D,
            self.in_orient_groups,
            p.sigma,
        ) + struct.pack("<2i", self.pad, self.stride)
        return header + self.learned.astype("<f8").tobytes() + self.bias.astype(
            "<f8"
        ).tobytes()

    @classmethod
    def load_bytes(cls, blob: bytes) -> "GofLayer":
        """Rebuild a layer; the Gabor bank is regenerated, never deserialized."""
        if blob[:4] != MAGIC:
            raise ConfigError(f"bad layer magic {blob[:4]!r}")
        off = 4
        U, V, W, v, M, D, groups = struct.unpack_from("<7i", blob, off)
        off += 28
        (sigma,) = struct.unpack_from("<d", blob, off)
        off += 8
        pad, stride = struct.unpack_from("<2i", blob, off)
        off += 8
        bank = build_bank(GaborParams(U, V, W, sigma))
        layer = cls(M, D, bank, v, in_orient_groups=groups, pad=pad, stride=stride)
        n_learned = M * D * W * W
        layer.learned = np.frombuffer(
            blob, dtype="<f8", count=n_learned, offset=off
        ).reshape(M, D, W, W).copy()
        off += n_learned * 8
        layer.bias = np.frombuffer(blob, dtype="<f8", count=M * U, offset=off).copy()
        return layer
