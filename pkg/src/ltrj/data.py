"""Datasets: MNIST IDX files, synthetic Gaussian blobs, splits and batch sampling."""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IDXParseError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        x = np.asarray(self.inputs)
        y = np.asarray(self.labels)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError("inputs must be a non-empty n x d matrix")
        if y.shape != (x.shape[0],):
            raise ValueError(f"labels shape {y.shape} does not match {x.shape[0]} inputs")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y.astype(np.int64, copy=False))

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], self.num_classes)


def _read_header(buf: bytes, magic: int, ndim: int, what: str) -> tuple[int, ...]:
    need = 4 * (1 + ndim)
    if len(buf) < need:
        raise IDXParseError(f"{what}: truncated header at offset {len(buf)}, need {need} bytes")
    got = struct.unpack_from(">i", buf, 0)[0]
    if got != magic:
        raise IDXParseError(f"{what}: bad magic {got} at offset 0, expected {magic}")
    return struct.unpack_from(f">{ndim}i", buf, 4)


def parse_idx(image_bytes: bytes, label_bytes: bytes, num_classes: int = 10) -> Dataset:
    """Decode an IDX image file (u8, n x rows x cols) and its label file."""
    n, rows, cols = _read_header(image_bytes, IMAGE_MAGIC, 3, "images")
    (m,) = _read_header(label_bytes, LABEL_MAGIC, 1, "labels")
    if n != m:
        raise IDXParseError(f"labels: count {m} at offset 4 does not match image count {n}")
    size = n * rows * cols
    if len(image_bytes) != 16 + size:
        raise IDXParseError(
            f"images: payload at offset 16 has {len(image_bytes) - 16} bytes, expected {size}")
    if len(label_bytes) != 8 + n:
        raise IDXParseError(f"labels: payload at offset 8 has {len(label_bytes) - 8} bytes, expected {n}")
    pixels = np.frombuffer(image_bytes, dtype=np.uint8, offset=16).reshape(n, rows * cols)
    labels = np.frombuffer(label_bytes, dtype=np.uint8, offset=8).astype(np.int64)
    if n and labels.max() >= num_classes:
        bad = int(np.argmax(labels >= num_classes))
        raise IDXParseError(f"labels: value {labels[bad]} at offset {8 + bad} exceeds {num_classes - 1}")
    return Dataset(pixels.astype(np.float32) / np.float32(255.0), labels, num_classes)


def encode_idx(pixels: np.ndarray, labels: np.ndarray) -> tuple[bytes, bytes]:
    """Inverse of ``parse_idx`` for u8 images of shape (n, rows, cols)."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.dtype != np.uint8:
        raise ValueError("pixels must be a uint8 array of shape (n, rows, cols)")
    labels = np.asarray(labels).astype(np.uint8)
    n, rows, cols = pixels.shape
    images = struct.pack(">4i", IMAGE_MAGIC, n, rows, cols) + pixels.tobytes()
    lab = struct.pack(">2i", LABEL_MAGIC, len(labels)) + labels.tobytes()
    return images, lab


def data_root(root: str | os.PathLike | None = None) -> Path:
    return Path(root or os.environ.get("LTRJ_DATA_DIR", "data"))


def mnist_available(root=None, split: str = "train") -> bool:
    r = data_root(root)
    return all((r / f).is_file() for f in MNIST_FILES[split])


def load_mnist(root=None, split: str = "train") -> Dataset:
    r = data_root(root)
    img, lab = MNIST_FILES[split]
    return parse_idx((r / img).read_bytes(), (r / lab).read_bytes())


def write_mnist_subset(root, num_train: int | None = None) -> Path:
    """Write the 5000-image MNIST subset shipped with mlxtend as IDX training files.

    For offline environments where the full MNIST files cannot be fetched.
    """
    from mlxtend.data import mnist_data

    x, y = mnist_data()
    if num_train is not None:
        x, y = x[:num_train], y[:num_train]
    images, labels = encode_idx(x.reshape(-1, 28, 28).astype(np.uint8), y)
    r = Path(root)
    r.mkdir(parents=True, exist_ok=True)
    img_name, lab_name = MNIST_FILES["train"]
    (r / img_name).write_bytes(images)
    (r / lab_name).write_bytes(labels)
    return r


def synth_blobs(num_classes: int, per_class: int, dim: int, spread: float, seed: int) -> Dataset:
    """Isotropic Gaussian clusters around unit-scale random centers."""
    if num_classes < 1 or per_class < 1 or dim < 1:
        raise ValueError("num_classes, per_class and dim must be >= 1")
    if spread < 0:
        raise ValueError("spread must be non-negative")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((num_classes, dim))
    labels = np.repeat(np.arange(num_classes), per_class)
    noise = rng.standard_normal((len(labels), dim)) * spread
    inputs = (centers[labels] + noise).astype(np.float32)
    order = rng.permutation(len(labels))
    return Dataset(inputs[order], labels[order], num_classes)


def split_train_val(ds: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic disjoint 9:1 split."""
    n = len(ds)
    if n < 10:
        raise ValueError("need at least 10 examples to split 9:1")
    order = np.random.default_rng(seed).permutation(n)
    n_val = n // 10
    return ds.subset(np.sort(order[n_val:])), ds.subset(np.sort(order[:n_val]))


class BatchSampler:
    """Seeded mini-batches; each epoch is a fresh permutation, short last batch kept."""

    def __init__(self, n: int, batch_size: int, seed: int):
        if n < 1 or batch_size < 1:
            raise ValueError("n and batch_size must be >= 1")
        self.n = n
        self.batch_size = batch_size
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    @property
    def batches_per_epoch(self) -> int:
        return math.ceil(self.n / self.batch_size)

    def epoch(self) -> Iterator[np.ndarray]:
        order = self._rng.permutation(self.n)
        for k in range(0, self.n, self.batch_size):
            yield order[k:k + self.batch_size]

    def __iter__(self) -> Iterator[np.ndarray]:
        while True:
            yield from self.epoch()
