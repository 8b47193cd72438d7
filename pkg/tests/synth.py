"""Procedural digit corpus in MNIST IDX format.

Renders seven-segment style digits with random shifts, thickness,
brightness, and noise, then writes canonical big-endian IDX files.  The
writers here are independent of the package's readers, so round-trip tests
exercise both directions of the format.
"""

import struct

import numpy as np

# segment -> (row0, row1, col0, col1) in a 24x16 glyph box
_SEGS = {
    "t": (0, 3, 2, 14),
    "tl": (0, 12, 0, 3),
    "tr": (0, 12, 13, 16),
    "m": (10, 13, 2, 14),
    "bl": (11, 24, 0, 3),
    "br": (11, 24, 13, 16),
    "b": (21, 24, 2, 14),
}

_DIGIT_SEGS = {
    0: "t tl tr bl br b",
    1: "tr br",
    2: "t tr m bl b",
    3: "t tr m br b",
    4: "tl tr m br",
    5: "t tl m br b",
    6: "t tl m bl br b",
    7: "t tr br",
    8: "t tl tr m bl br b",
    9: "t tl tr m br b",
}


def render_digit(digit: int, rng: np.random.Generator) -> np.ndarray:
    glyph = np.zeros((24, 16), dtype=np.float32)
    for seg in _DIGIT_SEGS[digit].split():
        r0, r1, c0, c1 = _SEGS[seg]
        glyph[r0:r1, c0:c1] = 1.0
    canvas = np.zeros((28, 28), dtype=np.float32)
    dr = rng.integers(-2, 3)
    dc = rng.integers(-3, 4)
    r, c = 2 + dr, 6 + dc
    canvas[r : r + 24, c : c + 16] = glyph
    canvas *= rng.uniform(0.6, 1.0)
    canvas += rng.normal(0.0, 0.08, canvas.shape).astype(np.float32)
    return (np.clip(canvas, 0.0, 1.0) * 255).astype(np.uint8)


def make_corpus(n: int, seed: int):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=n).astype(np.uint8)
    images = np.stack([render_digit(int(d), rng) for d in labels])
    return images, labels


def write_idx_images(path, images: np.ndarray):
    n, h, w = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, h, w))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels: np.ndarray):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def make_mnist_like(root, n_train: int, n_test: int, seed: int = 0):
    """Write a full train/test IDX corpus under ``root``; returns the root."""
    root = str(root)
    tr_img, tr_lab = make_corpus(n_train, seed)
    te_img, te_lab = make_corpus(n_test, seed + 1)
    write_idx_images(f"{root}/train-images-idx3-ubyte", tr_img)
    write_idx_labels(f"{root}/train-labels-idx1-ubyte", tr_lab)
    write_idx_images(f"{root}/t10k-images-idx3-ubyte", te_img)
    write_idx_labels(f"{root}/t10k-labels-idx1-ubyte", te_lab)
    return root


def write_cifar_batch(path, images: np.ndarray, labels: np.ndarray):
    """Write CIFAR-10 binary records: label byte + channel-major pixels."""
    n = len(labels)
    records = np.empty((n, 3073), dtype=np.uint8)
    records[:, 0] = labels
    records[:, 1:] = images.reshape(n, -1)
    records.tofile(path)
