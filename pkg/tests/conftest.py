import struct

import numpy as np
import pytest


def write_idx_pair(tmp_path, images, labels, stem="data"):
    """Write a raw IDX image/label pair by hand (independent of save_idx)."""
    n, h, w = images.shape
    img_path = tmp_path / f"{stem}-images-idx3-ubyte"
    lab_path = tmp_path / f"{stem}-labels-idx1-ubyte"
    with open(img_path, "wb") as fh:
        fh.write(struct.pack(">4i", 0x00000803, n, h, w))
        fh.write(images.astype(np.uint8).tobytes())
    with open(lab_path, "wb") as fh:
        fh.write(struct.pack(">2i", 0x00000801, n))
        fh.write(labels.astype(np.uint8).tobytes())
    return img_path, lab_path


@pytest.fixture
def idx_pair(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(6, 28, 28))
    labels = rng.integers(0, 10, size=6)
    img_path, lab_path = write_idx_pair(tmp_path, images, labels)
    return img_path, lab_path, images, labels
