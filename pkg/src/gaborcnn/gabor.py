"""Real-part Gabor filter banks on centered integer grids.

A bank holds U orientations times V scales of W x W kernels. Each kernel is
the real part of a complex Gabor wavelet: a Gaussian envelope times an
oscillatory carrier with its DC component removed. Orientation angles are
u*pi/U for u in {0..U-1}; the carrier frequency at scale v (1-based) is
(pi/2) / sqrt(2)^(v-1), so frequency halves every two scale steps and never
exceeds pi/2.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

DEFAULT_SIGMA = 2.0 * math.pi


@dataclass(frozen=True)
class GaborParams:
    """Bank geometry: U orientations, V scales, odd kernel size W."""

    num_orientations: int
    num_scales: int
    kernel_size: int
    sigma: float = DEFAULT_SIGMA

    def __post_init__(self):
        if self.num_orientations < 1:
            raise ConfigError(f"num_orientations must be >= 1, got {self.num_orientations}")
        if self.num_scales < 1:
            raise ConfigError(f"num_scales must be >= 1, got {self.num_scales}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(
                f"kernel_size must be odd and positive, got {self.kernel_size}"
            )
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")

    def orientation_angle(self, u: int) -> float:
        """Carrier angle for orientation index u in {0..U-1}."""
        return u * math.pi / self.num_orientations

    def frequency(self, v: int) -> float:
        """Carrier magnitude k_v for scale index v in {1..V}."""
        return (math.pi / 2.0) / math.sqrt(2.0) ** (v - 1)


@dataclass(frozen=True)
class GaborBank:
    """All U*V kernels of a parameter set, indexed [u][v-1]."""

    params: GaborParams
    kernels: np.ndarray = field(repr=False)  # (U, V, W, W) float64

    def kernel(self, u: int, v: int) -> np.ndarray:
        """Kernel for orientation u (0-based) and scale v (1-based)."""
        return self.kernels[u, v - 1]


def grid_coords(kernel_size: int) -> np.ndarray:
    """Centered integer coordinates -(W-1)/2 .. (W-1)/2."""
    half = (kernel_size - 1) // 2
    return np.arange(-half, half + 1, dtype=np.float64)


def build_bank(params: GaborParams) -> GaborBank:
    """Evaluate every (u, v) kernel on the centered W x W grid.

    Kernel value at z = (x, y):
        (k_v^2 / sigma^2) * exp(-k_v^2 |z|^2 / (2 sigma^2))
        * (cos(k_v (cos(a_u) x + sin(a_u) y)) - exp(-sigma^2 / 2))
    i.e. the real part of the complex wavelet, DC term subtracted.
    """
    U, V, W = params.num_orientations, params.num_scales, params.kernel_size
    sigma = params.sigma
    coords = grid_coords(W)
    # kernel[row, col] with y down rows and x along columns
    xx = coords[np.newaxis, :]
    yy = coords[:, np.newaxis]
    rsq = xx**2 + yy**2
    dc = math.exp(-sigma**2 / 2.0)

    kernels = np.empty((U, V, W, W), dtype=np.float64)
    for v in range(1, V + 1):
        kv = params.frequency(v)
        envelope = (kv**2 / sigma**2) * np.exp(-(kv**2) * rsq / (2.0 * sigma**2))
        for u in range(U):
            angle = params.orientation_angle(u)
            phase = kv * (math.cos(angle) * xx + math.sin(angle) * yy)
            kernels[u, v - 1] = envelope * (np.cos(phase) - dc)

    if not np.all(np.isfinite(kernels)):
        raise ConfigError("gabor bank evaluation produced non-finite values")
    return GaborBank(params=params, kernels=kernels)


def ones_bank(params: GaborParams) -> GaborBank:
    """All-ones bank: modulation becomes the identity. Test hook."""
    U, V, W = params.num_orientations, params.num_scales, params.kernel_size
    return GaborBank(params=params, kernels=np.ones((U, V, W, W)))


def bank_summary(bank: GaborBank) -> list[dict]:
    """Per-kernel min/max/energy rows, for CLI reporting."""
    rows = []
    for u in range(bank.params.num_orientations):
        for v in range(1, bank.params.num_scales + 1):
            k = bank.kernel(u, v)
            rows.append(
                {
                    "u": u,
                    "v": v,
                    "min": float(k.min()),
                    "max": float(k.max()),
                    "energy": float(np.sum(k**2)),
                }
            )
    return rows


def render_bank(bank: GaborBank, out_dir: str) -> list[str]:
    """Write one min-max normalized grayscale PNG per kernel plus a raw CSV.

    Returns the list of paths written. The CSV holds exact float values with
    header u,v,x,y,value; images are 8-bit for visual inspection only.
    """
    from PIL import Image

    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir!r}: {exc}") from exc

    params = bank.params
    coords = grid_coords(params.kernel_size).astype(int)
    written = []
    csv_path = os.path.join(out_dir, "bank.csv")
    try:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["u", "v", "x", "y", "value"])
            for u in range(params.num_orientations):
                for v in range(1, params.num_scales + 1):
                    k = bank.kernel(u, v)
                    for iy, y in enumerate(coords):
                        for ix, x in enumerate(coords):
                            writer.writerow([u, v, x, y, repr(float(k[iy, ix]))])
                    lo, hi = k.min(), k.max()
                    scale = 255.0 / (hi - lo) if hi > lo else 0.0
                    img = ((k - lo) * scale).round().astype(np.uint8)
                    img_path = os.path.join(out_dir, f"kernel_u{u}_v{v}.png")
                    Image.fromarray(img, mode="L").save(img_path)
                    written.append(img_path)
    except OSError as exc:
        raise OSError(f"cannot write bank files under {out_dir!r}: {exc}") from exc
    written.append(csv_path)
    return written
