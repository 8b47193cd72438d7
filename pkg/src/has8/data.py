"""Dataset ingestion: MNIST IDX and CIFAR-10 binary formats, splits, batching.

Pixels are divided by 255 and kept in [0,1] with no further standardization,
because the spike encoder maps [0,1] onto the 8-bit intensity grid and has
no representation for negative standardized values.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 3*32*32 channel-major pixels


@dataclass
class Dataset:
    """In-memory image classification corpus with its split bookkeeping."""

    images: np.ndarray  # [N, C, H, W] float32 in [0,1]
    labels: np.ndarray  # [N] int64
    num_classes: int
    checksum: str
    name: str = ""

    def __len__(self):
        return self.images.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.images[idx], self.labels[idx], self.num_classes, self.checksum, self.name)


def tensor_checksum(images: np.ndarray, labels: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(images.tobytes())
    h.update(labels.tobytes())
    return h.hexdigest()


def _read_exact(f, n: int, path: str, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise DataFormatError(
            f"{path}: truncated while reading {what}: wanted {n} bytes at offset {f.tell() - len(data)}, got {len(data)}"
        )
    return data


def read_idx_images(path: str) -> np.ndarray:
    """Parse a big-endian IDX image file into a uint8 array [N, H, W]."""
    with open(path, "rb") as f:
        magic, n, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, path, "header"))
        if magic != IDX_MAGIC_IMAGES:
            raise DataFormatError(f"{path}: bad image magic 0x{magic:08x} at offset 0, expected 0x{IDX_MAGIC_IMAGES:08x}")
        raw = _read_exact(f, n * rows * cols, path, f"{n} images of {rows}x{cols}")
        if f.read(1):
            raise DataFormatError(f"{path}: trailing bytes after {n} images at offset {16 + n * rows * cols}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(n, rows, cols)


def read_idx_labels(path: str) -> np.ndarray:
    """Parse a big-endian IDX label file into a uint8 array [N]."""
    with open(path, "rb") as f:
        magic, n = struct.unpack(">II", _read_exact(f, 8, path, "header"))
        if magic != IDX_MAGIC_LABELS:
            raise DataFormatError(f"{path}: bad label magic 0x{magic:08x} at offset 0, expected 0x{IDX_MAGIC_LABELS:08x}")
        raw = _read_exact(f, n, path, f"{n} labels")
        if f.read(1):
            raise DataFormatError(f"{path}: trailing bytes after {n} labels at offset {8 + n}")
    return np.frombuffer(raw, dtype=np.uint8)


def resize_nearest(images: np.ndarray, target: int) -> np.ndarray:
    """Nearest-neighbor resize of [N, C, H, W] to target x target."""
    n, c, h, w = images.shape
    rows = (np.arange(target) * h // target).astype(np.int64)
    cols = (np.arange(target) * w // target).astype(np.int64)
    return np.ascontiguousarray(images[:, :, rows[:, None], cols[None, :]])


def _finalize(images_u8: np.ndarray, labels_u8: np.ndarray, num_classes: int, name: str, resize_to) -> Dataset:
    images = images_u8.astype(np.float32) / 255.0
    if resize_to and max(images.shape[2], images.shape[3]) > resize_to:
        images = resize_nearest(images, resize_to)
    labels = labels_u8.astype(np.int64)
    if len(labels) != images.shape[0]:
        raise DataFormatError(f"{name}: {images.shape[0]} images but {len(labels)} labels")
    if labels.size and labels.max() >= num_classes:
        raise DataFormatError(f"{name}: label {labels.max()} out of range for {num_classes} classes")
    return Dataset(images, labels, num_classes, tensor_checksum(images, labels), name)


def load_mnist(root: str, split: str = "train", limit: int | None = None, resize_to: int | None = None) -> Dataset:
    """Load one MNIST split from IDX files under ``root``.

    Accepts either the canonical file names (train-images-idx3-ubyte /
    t10k-images-idx3-ubyte) or ``<split>-images-idx3-ubyte``.
    """
    prefixes = {"train": ("train",), "test": ("t10k", "test")}.get(split)
    if prefixes is None:
        raise ValueError(f"unknown MNIST split {split!r}; expected 'train' or 'test'")
    for prefix in prefixes:
        img_path = os.path.join(root, f"{prefix}-images-idx3-ubyte")
        lab_path = os.path.join(root, f"{prefix}-labels-idx1-ubyte")
        if os.path.exists(img_path):
            break
    else:
        raise DataFormatError(f"no MNIST {split} files found under {root}")
    images = read_idx_images(img_path)
    labels = read_idx_labels(lab_path)
    if len(images) != len(labels):
        raise DataFormatError(f"{root}: image count {len(images)} != label count {len(labels)}")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    return _finalize(images[:, None, :, :], labels, 10, f"mnist-{split}", resize_to)


def load_cifar10(root: str, split: str = "train", limit: int | None = None, resize_to: int | None = None) -> Dataset:
    """Load CIFAR-10 binary batches (3073-byte records) from ``root``."""
    files = [f"data_batch_{i}.bin" for i in range(1, 6)] if split == "train" else ["test_batch.bin"]
    images, labels = [], []
    for fname in files:
        path = os.path.join(root, fname)
        if not os.path.exists(path):
            raise DataFormatError(f"missing CIFAR-10 file {path}")
        size = os.path.getsize(path)
        if size % CIFAR_RECORD_BYTES:
            raise DataFormatError(
                f"{path}: size {size} is not a multiple of {CIFAR_RECORD_BYTES}; first partial record at offset "
                f"{size - size % CIFAR_RECORD_BYTES}"
            )
        raw = np.fromfile(path, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        labels.append(raw[:, 0])
        images.append(raw[:, 1:].reshape(-1, 3, 32, 32))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    return _finalize(images, labels, 10, f"cifar10-{split}", resize_to)


def split_80_20(ds: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded 80/20 permutation split into (train, validation)."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ds))
    cut = int(len(ds) * 0.8)
    return ds.subset(perm[:cut]), ds.subset(perm[cut:])


def batches(ds: Dataset, batch_size: int, seed: int, epoch: int):
    """Yield (images, labels) batches in a per-epoch seeded shuffle order.

    The order is keyed by (seed, epoch) only, so any two runs with the same
    configuration see identical streams.  The last partial batch is kept.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = np.random.default_rng([seed, epoch]).permutation(len(ds))
    for start in range(0, len(ds), batch_size):
        idx = order[start : start + batch_size]
        yield ds.images[idx], ds.labels[idx]
