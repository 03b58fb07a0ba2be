"""Shared fixtures and tiny file-format writers used as loader oracles."""

import os
import struct

import numpy as np
import pytest

from robustproj.datasets import LabeledDataset


def write_idx_images(path, images):
    """Independent IDX writer: big-endian header, raw bytes. images: (N, H, W) uint8."""
    images = np.asarray(images, dtype=np.uint8)
    n, h, w = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, h, w))
        f.write(images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.tobytes())


def write_cifar_batch(path, labels, rgb):
    """Independent CIFAR-binary writer. rgb: (N, 3, 1024) uint8."""
    labels = np.asarray(labels, dtype=np.uint8)
    rgb = np.asarray(rgb, dtype=np.uint8)
    with open(path, "wb") as f:
        for lbl, pix in zip(labels, rgb):
            f.write(bytes([lbl]))
            f.write(pix.tobytes())


def gaussian_blobs(rng, n_per_class, dim, centers, scale=1.0):
    """Synthetic classification data: one spherical Gaussian per class."""
    X, y = [], []
    for label, c in enumerate(centers):
        X.append(rng.normal(0.0, scale, (n_per_class, dim)) + np.asarray(c))
        y.append(np.full(n_per_class, label))
    return np.vstack(X), np.concatenate(y)


def image_blob_dataset(rng, n_per_class, side, name="synthetic"):
    """Square-image binary dataset in [0, 1]: bright-corner vs bright-center."""
    dim = side * side
    base = rng.uniform(0.2, 0.4, (2 * n_per_class, dim))
    y = np.repeat([0, 1], n_per_class)
    imgs = base.reshape(-1, side, side)
    q = max(1, side // 3)
    imgs[:n_per_class, :q, :q] += 0.5
    imgs[n_per_class:, side // 2 - q // 2:side // 2 + q, side // 2 - q // 2:side // 2 + q] += 0.5
    X = np.clip(imgs.reshape(-1, dim), 0.0, 1.0)
    order = rng.permutation(len(y))
    return LabeledDataset(X=X[order], y=y[order], n_classes=2, name=name)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def mnist_dir():
    """Directory holding the raw MNIST IDX files, if available."""
    for candidate in (os.environ.get("ROBUSTPROJ_MNIST_DIR", ""),
                      os.path.join(os.path.dirname(__file__), "..", "data", "mnist")):
        if candidate and os.path.isfile(os.path.join(candidate, "train-images-idx3-ubyte")):
            return candidate
    return None


requires_mnist = pytest.mark.skipif(
    mnist_dir() is None,
    reason="raw MNIST IDX files not found (set ROBUSTPROJ_MNIST_DIR or place them "
           "in data/mnist); this environment has no dataset access",
)
