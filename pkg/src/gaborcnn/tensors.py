"""Dense rank-4 tensors and 2-D cross-correlation primitives.

Everything is float64. Tensor4 carries optional orientation-group metadata:
channels may be laid out as (filters x groups), with the group axis innermost.
Correlation is cross-correlation (no kernel flip), zero padding, and a fixed
summation order per output element.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass
class Tensor4:
    """(batch, channels, rows, cols) array plus orientation-group count."""

    data: np.ndarray
    orient_groups: int | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 4:
            raise ShapeError(f"Tensor4 requires 4 axes, got shape {self.data.shape}")
        if self.orient_groups is not None:
            c = self.data.shape[1]
            if self.orient_groups < 1 or c % self.orient_groups != 0:
                raise ShapeError(
                    f"orient_groups={self.orient_groups} does not divide {c} channels"
                )

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape


@dataclass
class Filter4:
    """(out_filters, in_depth, kh, kw) filter stack."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 4:
            raise ShapeError(f"Filter4 requires 4 axes, got shape {self.data.shape}")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape


def out_size(extent: int, k: int, pad: int, stride: int) -> int:
    return (extent + 2 * pad - k) // stride + 1


def _check_conv_shapes(x: np.ndarray, f: np.ndarray, pad: int, stride: int):
    n, c, h, w = x.shape
    m, d, kh, kw = f.shape
    if c != d:
        raise ShapeError(
            f"input channels {x.shape} do not match filter depth {f.shape}"
        )
    if kh > h + 2 * pad or kw > w + 2 * pad:
        raise ShapeError(
            f"kernel {kh}x{kw} exceeds padded input {h + 2 * pad}x{w + 2 * pad}"
        )
    if pad < 0 or stride < 1:
        raise ShapeError(f"invalid pad={pad} / stride={stride}")


def correlate2d_raw(
    x: np.ndarray, f: np.ndarray, pad: int = 0, stride: int = 1
) -> np.ndarray:
    """Cross-correlate (n,c,h,w) with (m,c,kh,kw) -> (n,m,oh,ow).

    One matmul per kernel tap over strided slices; the tap loop runs in a
    fixed order, so per-element accumulation order is deterministic.
    """
    _check_conv_shapes(x, f, pad, stride)
    n, c, h, w = x.shape
    m, _, kh, kw = f.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (x.shape[2] - kh) // stride + 1
    ow = (x.shape[3] - kw) // stride + 1
    # channels-last staging keeps the per-tap matmuls on contiguous rows
    xt = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
    taps = np.ascontiguousarray(f.transpose(2, 3, 1, 0))  # (kh, kw, d, m)
    out = np.zeros((n, oh, ow, m))
    for ki in range(kh):
        for kj in range(kw):
            sl = xt[
                :,
                ki : ki + (oh - 1) * stride + 1 : stride,
                kj : kj + (ow - 1) * stride + 1 : stride,
                :,
            ]
            out += sl @ taps[ki, kj]
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def correlate2d(
    x: Tensor4, f: Filter4, pad: int = 0, stride: int = 1
) -> Tensor4:
    """Typed wrapper over correlate2d_raw; output channels = filter count."""
    return Tensor4(correlate2d_raw(x.data, f.data, pad, stride))


def correlate2d_input_grad(
    grad_out: np.ndarray, f: np.ndarray, pad: int, input_hw: tuple[int, int]
) -> np.ndarray:
    """Gradient of correlate2d_raw w.r.t. its input, stride 1.

    Scatters each kernel tap's matmul back onto the padded input extent,
    then cuts the padding border away.
    """
    m, d, kh, kw = f.shape
    n, _, oh, ow = grad_out.shape
    h, w = input_hw
    gt = np.ascontiguousarray(grad_out.transpose(0, 2, 3, 1))
    taps = np.ascontiguousarray(f.transpose(2, 3, 0, 1))  # (kh, kw, m, d)
    buf = np.zeros((n, h + 2 * pad, w + 2 * pad, d))
    for ki in range(kh):
        for kj in range(kw):
            buf[:, ki : ki + oh, kj : kj + ow, :] += gt @ taps[ki, kj]
    return np.ascontiguousarray(
        buf[:, pad : pad + h, pad : pad + w, :].transpose(0, 3, 1, 2)
    )


def correlate2d_filter_grad(
    x: np.ndarray, grad_out: np.ndarray, pad: int, kernel_hw: tuple[int, int]
) -> np.ndarray:
    """Gradient of correlate2d_raw w.r.t. its filters, stride 1."""
    n, c, h, w = x.shape
    _, m, oh, ow = grad_out.shape
    kh, kw = kernel_hw
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.empty((m, c, kh, kw))
    for ki in range(kh):
        for kj in range(kw):
            out[:, :, ki, kj] = np.tensordot(
                grad_out,
                x[:, :, ki : ki + oh, kj : kj + ow],
                axes=([0, 2, 3], [0, 2, 3]),
            )
    return out


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_same_shape(a, b, "add")
    return a + b


def scale(a: np.ndarray, factor: float) -> np.ndarray:
    return a * float(factor)


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_same_shape(a, b, "hadamard")
    return a * b


def max_reduce_over_axis(a: np.ndarray, axis: int) -> np.ndarray:
    return np.max(a, axis=axis)


def _check_same_shape(a: np.ndarray, b: np.ndarray, op: str):
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"{op}: shape mismatch {np.shape(a)} vs {np.shape(b)}")
