"""Independent numerical oracles.

These deliberately share no numeric code with the production paths they
check: the Gabor oracle works in full complex arithmetic point by point, the
correlation oracle is a quadruple loop, and gradients come from central
finite differences. They are slow by design and meant for small inputs.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from .gabor import GaborParams


def oracle_gabor(params: GaborParams, u: int, v: int, x: float, y: float) -> float:
    """Complex-arithmetic evaluation of one Gabor kernel point; real part."""
    kv = (math.pi / 2.0) / math.sqrt(2.0) ** (v - 1)
    ku = u * math.pi / params.num_orientations
    kvec = kv * cmath.exp(1j * ku)  # (k_x, k_y) packed as a complex number
    ksq = abs(kvec) ** 2
    zsq = x * x + y * y
    sigma2 = params.sigma**2
    carrier = cmath.exp(1j * (kvec.real * x + kvec.imag * y))
    value = (ksq / sigma2) * math.exp(-ksq * zsq / (2.0 * sigma2)) * (
        carrier - cmath.exp(-sigma2 / 2.0)
    )
    return value.real


def oracle_gabor_imag(params: GaborParams, u: int, v: int, x: float, y: float) -> float:
    """Imaginary part of the same complex evaluation."""
    kv = (math.pi / 2.0) / math.sqrt(2.0) ** (v - 1)
    ku = u * math.pi / params.num_orientations
    kvec = kv * cmath.exp(1j * ku)
    ksq = abs(kvec) ** 2
    sigma2 = params.sigma**2
    carrier = cmath.exp(1j * (kvec.real * x + kvec.imag * y))
    value = (ksq / sigma2) * math.exp(-ksq * (x * x + y * y) / (2.0 * sigma2)) * (
        carrier - cmath.exp(-sigma2 / 2.0)
    )
    return value.imag


def oracle_correlate(
    x: np.ndarray, f: np.ndarray, pad: int = 0, stride: int = 1
) -> np.ndarray:
    """Naive nested-loop cross-correlation, zero padding."""
    n, c, h, w = x.shape
    m, d, kh, kw = f.shape
    assert c == d, "channel mismatch"
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((n, m, oh, ow))
    for b in range(n):
        for o in range(m):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for ch in range(c):
                        for ki in range(kh):
                            for kj in range(kw):
                                yy = i * stride + ki - pad
                                xx = j * stride + kj - pad
                                if 0 <= yy < h and 0 <= xx < w:
                                    acc += x[b, ch, yy, xx] * f[o, ch, ki, kj]
                    out[b, o, i, j] = acc
    return out


def fd_gradient(loss_fn, params: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar loss over a flat view of params."""
    grad = np.zeros_like(params, dtype=np.float64)
    flat = params.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = loss_fn()
        flat[i] = orig - step
        lo = loss_fn()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max over elements of |a-b| / max(1, |a|, |b|)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


class ScalarAdadelta:
    """Per-scalar transcription of the Adadelta recurrences, for cross-checks."""

    def __init__(self, rho: float = 0.9, eps: float = 1e-6, lr: float = 1.0):
        self.rho = rho
        self.eps = eps
        self.lr = lr
        self.acc_grad = 0.0
        self.acc_update = 0.0

    def step(self, x: float, g: float) -> float:
        self.acc_grad = self.rho * self.acc_grad + (1.0 - self.rho) * g * g
        delta = (
            math.sqrt(self.acc_update + self.eps)
            / math.sqrt(self.acc_grad + self.eps)
        ) * g
        self.acc_update = self.rho * self.acc_update + (1.0 - self.rho) * delta * delta
        return x - self.lr * delta
