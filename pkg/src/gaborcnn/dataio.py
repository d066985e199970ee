"""Dataset ingestion: IDX files, random-rotation synthesis, splits, batching.

Images are float64 in [0, 1], shaped (n, 1, 28, 28) for the digit datasets.
Rotation uses inverse mapping with bilinear interpolation and zero fill, one
independent uniform angle in [0, 2*pi) per image, deterministic per seed.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagicError, ConfigError, CountMismatchError, TruncatedFileError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass
class ImageDataset:
    images: np.ndarray  # (n, 1, h, w) float64 in [0, 1]
    labels: np.ndarray  # (n,) int64
    provenance: str = "unknown"

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise CountMismatchError(
                f"{self.images.shape[0]} images vs {self.labels.shape[0]} labels"
            )

    def __len__(self) -> int:
        return self.images.shape[0]

    def subset(self, indices: np.ndarray, provenance: str | None = None):
        return ImageDataset(
            self.images[indices], self.labels[indices],
            provenance if provenance is not None else self.provenance,
        )


def _read_exact(fh, n: int, path: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedFileError(f"{path}: expected {n} more bytes, got {len(data)}")
    return data


def load_idx(images_path: str, labels_path: str) -> ImageDataset:
    """Read big-endian IDX image/label file pair."""
    with open(images_path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(
            ">4i", _read_exact(fh, 16, images_path)
        )
        if magic != IMAGES_MAGIC:
            raise BadMagicError(
                f"{images_path}: magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}"
            )
        raw = _read_exact(fh, count * rows * cols, images_path)
    images = np.frombuffer(raw, dtype=np.uint8).reshape(count, 1, rows, cols)
    images = images.astype(np.float64) / 255.0

    with open(labels_path, "rb") as fh:
        magic, lcount = struct.unpack(">2i", _read_exact(fh, 8, labels_path))
        if magic != LABELS_MAGIC:
            raise BadMagicError(
                f"{labels_path}: magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}"
            )
        labels = np.frombuffer(
            _read_exact(fh, lcount, labels_path), dtype=np.uint8
        ).astype(np.int64)
    if lcount != count:
        raise CountMismatchError(
            f"{count} images ({images_path}) vs {lcount} labels ({labels_path})"
        )
    return ImageDataset(images, labels, provenance="idx")


def save_idx(dataset: ImageDataset, images_path: str, labels_path: str):
    """Persist a dataset back to the IDX pair format (8-bit, rounded)."""
    n, _, rows, cols = dataset.images.shape
    pixels = np.clip(np.rint(dataset.images * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">4i", IMAGES_MAGIC, n, rows, cols))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">2i", LABELS_MAGIC, n))
        fh.write(dataset.labels.astype(np.uint8).tobytes())


def rotate_image(image: np.ndarray, angle: float) -> np.ndarray:
    """Rotate one (h, w) image about its center.

    Destination pixels are mapped back into the source and sampled
    bilinearly; samples falling outside the source are zero.
    """
    h, w = image.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    ys -= cy
    xs -= cx
    cos_a, sin_a = math.cos(angle), math.sin(angle)
    # inverse rotation of destination coordinates
    src_x = cos_a * xs + sin_a * ys + cx
    src_y = -sin_a * xs + cos_a * ys + cy

    x0 = np.floor(src_x).astype(int)
    y0 = np.floor(src_y).astype(int)
    fx = src_x - x0
    fy = src_y - y0

    out = np.zeros((h, w))
    for dy in (0, 1):
        for dx in (0, 1):
            yy = y0 + dy
            xx = x0 + dx
            weight = (fx if dx else 1 - fx) * (fy if dy else 1 - fy)
            inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            vals = np.zeros((h, w))
            vals[inside] = image[yy[inside], xx[inside]]
            out += weight * vals
    return out


def make_rot(
    dataset: ImageDataset, seed: int, angles: np.ndarray | None = None
) -> ImageDataset:
    """Rotate every image by an independent uniform angle in [0, 2*pi).

    `angles` overrides the random draw (test hook); labels are unchanged.
    """
    n = len(dataset)
    if angles is None:
        rng = np.random.default_rng(seed)
        angles = rng.uniform(0.0, 2.0 * math.pi, size=n)
    elif len(angles) != n:
        raise ConfigError(f"{len(angles)} angles for {n} images")
    images = np.empty_like(dataset.images)
    for i in range(n):
        images[i, 0] = rotate_image(dataset.images[i, 0], angles[i])
    return ImageDataset(images, dataset.labels.copy(), provenance=f"mnist-rot({seed})")


def split_train_val(
    dataset: ImageDataset, n_val: int = 10000, seed: int = 0
) -> tuple[ImageDataset, ImageDataset]:
    """Disjoint, exhaustive random split; deterministic per seed."""
    n = len(dataset)
    if n_val > n:
        raise ConfigError(f"n_val={n_val} exceeds dataset size {n}")
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.subset(perm[n_val:]), dataset.subset(perm[:n_val])


# --------------------------------------------------------------------------
# Built-in surrogate digits (no MNIST download in this environment)
# --------------------------------------------------------------------------


def _upsample_bilinear(image: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize of a square image to size x size."""
    h, w = image.shape
    ys = np.linspace(0, h - 1, size)
    xs = np.linspace(0, w - 1, size)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 2)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = image[np.ix_(y0, x0)]
    b = image[np.ix_(y0, x0 + 1)]
    c = image[np.ix_(y0 + 1, x0)]
    d = image[np.ix_(y0 + 1, x0 + 1)]
    return (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d)


def load_builtin_digits(
    n_train: int, n_test: int, seed: int = 0, size: int = 28
) -> tuple[ImageDataset, ImageDataset]:
    """Deterministic 28x28 digit datasets from the bundled 8x8 digits corpus.

    Stands in for MNIST where no download is possible. Originals are split
    into disjoint train/test pools first; each pool is then padded out to the
    requested count with small integer translations of its own images, so no
    test digit ever derives from a training digit.
    """
    from sklearn.datasets import load_digits

    raw = load_digits()
    images8 = raw.images / raw.images.max()
    labels = raw.target.astype(np.int64)
    n = images8.shape[0]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test_pool = max(1, n // 3)
    test_pool, train_pool = perm[:n_test_pool], perm[n_test_pool:]

    big = np.zeros((n, 1, size, size))
    margin = (size - 24) // 2
    for i in range(n):
        big[i, 0, margin : size - margin, margin : size - margin] = (
            _upsample_bilinear(images8[i], size - 2 * margin)
        )

    def expand(pool: np.ndarray, target: int, tag: str) -> ImageDataset:
        imgs = [big[pool]]
        labs = [labels[pool]]
        total = len(pool)
        while total < target:
            take = min(len(pool), target - total)
            idx = pool[rng.permutation(len(pool))[:take]]
            shifted = np.zeros((take, 1, size, size))
            for j, src in enumerate(idx):
                dy, dx = rng.integers(-1, 2, size=2)
                shifted[j, 0] = np.roll(big[src, 0], (dy, dx), axis=(0, 1))
            imgs.append(shifted)
            labs.append(labels[idx])
            total += take
        images = np.concatenate(imgs)[:target]
        labs = np.concatenate(labs)[:target]
        return ImageDataset(images, labs, provenance=tag)

    train = expand(train_pool, n_train, f"builtin-digits-train({seed})")
    test = expand(test_pool, n_test, f"builtin-digits-test({seed})")
    return train, test
