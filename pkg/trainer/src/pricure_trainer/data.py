"""Data loading: cached MNIST-style idx files and synthetic blob data.

MNIST is read from a local cache directory (this environment has no outbound
network access): set PRICURE_MNIST_DIR or pass the path explicitly. The
directory must hold the four standard idx files, optionally gzipped.
"""

from __future__ import annotations

import gzip
import os
import struct
from pathlib import Path

import numpy as np

MNIST_ENV = "PRICURE_MNIST_DIR"
_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


class DataError(Exception):
    pass


def _open_idx(base: Path, name: str):
    for candidate in (base / name, base / (name + ".gz")):
        if candidate.exists():
            opener = gzip.open if candidate.suffix == ".gz" else open
            return opener(candidate, "rb")
    raise DataError(f"missing {name}[.gz] in {base}")


def _read_idx(fh) -> np.ndarray:
    magic, = struct.unpack(">I", fh.read(4))
    ndim = magic & 0xFF
    dtype_code = (magic >> 8) & 0xFF
    if dtype_code != 0x08:
        raise DataError(f"unsupported idx dtype 0x{dtype_code:02x}")
    dims = struct.unpack(f">{ndim}I", fh.read(4 * ndim))
    data = np.frombuffer(fh.read(), dtype=np.uint8)
    if data.size != int(np.prod(dims)):
        raise DataError("idx payload size does not match header")
    return data.reshape(dims)


def mnist_dir() -> Path | None:
    path = os.environ.get(MNIST_ENV)
    return Path(path) if path else None


def load_mnist(base: Path | None = None):
    """Returns (train_x, train_y, test_x, test_y); pixels scaled to [0, 1]
    and rounded to two decimals so fixed-point encoding is lossless."""
    base = base or mnist_dir()
    if base is None:
        raise DataError(f"no MNIST cache; set {MNIST_ENV} or pass a directory")
    arrays = {}
    for key, name in _FILES.items():
        with _open_idx(Path(base), name) as fh:
            arrays[key] = _read_idx(fh)
    train_x = np.round(arrays["train_images"].reshape(-1, 784) / 255.0, 2)
    test_x = np.round(arrays["test_images"].reshape(-1, 784) / 255.0, 2)
    return (train_x, arrays["train_labels"].astype(np.int64),
            test_x, arrays["test_labels"].astype(np.int64))


def make_blobs(n_per_class: int, classes: int, seed: int, dim: int = 8,
               spread: float = 0.4, separation: float = 4.0):
    """Linearly separable Gaussian clusters, features rounded to two decimals."""
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(classes, dim))
    means = means / np.linalg.norm(means, axis=1, keepdims=True) * separation
    features = np.vstack([rng.normal(means[c], spread, size=(n_per_class, dim))
                          for c in range(classes)])
    labels = np.repeat(np.arange(classes), n_per_class)
    order = rng.permutation(len(labels))
    return np.round(features[order], 2), labels[order], np.round(means, 2)


def partition(n: int, owners: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Disjoint near-equal shards of range(n)."""
    order = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(order, owners)]
