"""Loaders for the raw MNIST IDX files and CIFAR-10 binary batches.

Both loaders return flattened grayscale images scaled to [0, 1]. Loading is
order-preserving and bit-exact: sample i always maps to row i, and rerunning a
loader on the same files yields identical arrays.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CountError, DataFormatError, DimensionError, TruncationError

MNIST_IMAGE_MAGIC = 0x00000803
MNIST_LABEL_MAGIC = 0x00000801
CIFAR_RECORD_SIZE = 3073  # 1 label byte + 32*32*3 pixel bytes
CIFAR_AIRPLANE = 0
CIFAR_FROG = 6
# ITU-R BT.601 luminance weights, frozen for reproducibility
GRAY_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class LabeledDataset:
    """Flattened images in [0, 1] with integer labels 0..K-1."""

    X: np.ndarray
    y: np.ndarray
    n_classes: int
    name: str

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise DimensionError("X and y disagree on the sample count")
        if self.X.shape[0] == 0:
            raise DimensionError("empty dataset")
        if self.X.min() < 0.0 or self.X.max() > 1.0:
            raise DataFormatError("pixel values outside [0, 1]")
        if self.y.min() < 0 or self.y.max() >= self.n_classes:
            raise DataFormatError("label outside 0..K-1")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class CenteringInfo:
    """Column means of the training design matrix."""

    mean: np.ndarray = field()


def _read_be_u32(buf, offset, path):
    if offset + 4 > len(buf):
        raise TruncationError(f"{path}: header truncated")
    return struct.unpack_from(">I", buf, offset)[0]


def load_mnist(image_path, label_path, expected_count):
    """Load one MNIST split from its IDX image/label file pair.

    Pixels are raw bytes divided by 255, each 28x28 image flattened row-major
    into a 784-entry row.
    """
    with open(image_path, "rb") as f:
        img_buf = f.read()
    with open(label_path, "rb") as f:
        lbl_buf = f.read()

    magic = _read_be_u32(img_buf, 0, image_path)
    if magic != MNIST_IMAGE_MAGIC:
        raise DataFormatError(f"{image_path}: bad magic 0x{magic:08x}")
    count = _read_be_u32(img_buf, 4, image_path)
    rows = _read_be_u32(img_buf, 8, image_path)
    cols = _read_be_u32(img_buf, 12, image_path)
    if count != expected_count:
        raise CountError(f"{image_path}: declares {count} images, expected {expected_count}")
    payload = len(img_buf) - 16
    if payload < count * rows * cols:
        raise TruncationError(f"{image_path}: payload truncated")

    magic = _read_be_u32(lbl_buf, 0, label_path)
    if magic != MNIST_LABEL_MAGIC:
        raise DataFormatError(f"{label_path}: bad magic 0x{magic:08x}")
    lbl_count = _read_be_u32(lbl_buf, 4, label_path)
    if lbl_count != expected_count:
        raise CountError(f"{label_path}: declares {lbl_count} labels, expected {expected_count}")
    if len(lbl_buf) - 8 < lbl_count:
        raise TruncationError(f"{label_path}: payload truncated")

    pixels = np.frombuffer(img_buf, dtype=np.uint8, count=count * rows * cols, offset=16)
    X = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    y = np.frombuffer(lbl_buf, dtype=np.uint8, count=count, offset=8).astype(np.int64)
    return LabeledDataset(X=X, y=y, n_classes=10, name="mnist")


def _load_cifar_records(path):
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) == 0 or len(buf) % CIFAR_RECORD_SIZE != 0:
        raise DataFormatError(
            f"{path}: length {len(buf)} is not a positive multiple of {CIFAR_RECORD_SIZE}"
        )
    raw = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD_SIZE)
    return raw[:, 0].astype(np.int64), raw[:, 1:]


def _binary_grayscale(labels, pixels, name):
    keep = (labels == CIFAR_AIRPLANE) | (labels == CIFAR_FROG)
    labels = labels[keep]
    rgb = pixels[keep].astype(np.float64).reshape(-1, 3, 1024)
    wr, wg, wb = GRAY_WEIGHTS
    gray = (wr * rgb[:, 0] + wg * rgb[:, 1] + wb * rgb[:, 2]) / 255.0
    y = (labels == CIFAR_FROG).astype(np.int64)  # airplane -> 0, frog -> 1
    return LabeledDataset(X=gray, y=y, n_classes=2, name=name)


def load_cifar_binary(batch_paths, test_batch_path, strict_counts=True):
    """Build the airplane-vs-frog task from CIFAR-10 binary batches.

    Keeps original classes 0 (airplane) and 6 (frog), relabeled 0/1, converts
    to BT.601 grayscale and flattens to 1024-entry rows. The official batches
    yield a 10,000-sample train set and a 2,000-sample test set; pass
    strict_counts=False to load synthetic or partial batches.
    """
    train_labels = []
    train_pixels = []
    for path in batch_paths:
        labels, pixels = _load_cifar_records(path)
        train_labels.append(labels)
        train_pixels.append(pixels)
    train = _binary_grayscale(
        np.concatenate(train_labels), np.vstack(train_pixels), "cifar-binary-train"
    )
    test_labels, test_pixels = _load_cifar_records(test_batch_path)
    test = _binary_grayscale(test_labels, test_pixels, "cifar-binary-test")

    if strict_counts:
        per_class = np.bincount(np.concatenate([train.y, test.y]), minlength=2)
        if per_class[0] != 6000 or per_class[1] != 6000:
            raise CountError(
                f"expected 6000 airplane + 6000 frog across train+test, got {per_class.tolist()}"
            )
    return train, test


def center(X, info=None):
    """Subtract column means; reuses a training mean when one is supplied."""
    X = np.asarray(X, dtype=np.float64)
    if info is None:
        mean = X.mean(axis=0)
    else:
        mean = np.asarray(info.mean, dtype=np.float64)
        if mean.shape != (X.shape[1],):
            raise DimensionError(
                f"mean has length {mean.shape[0]}, data has {X.shape[1]} columns"
            )
    return X - mean, CenteringInfo(mean=mean)
