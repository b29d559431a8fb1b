"""MNIST ingestion from IDX files, batching and noise sampling."""
from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .rng import Rng

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
ROWS = COLS = 28
N_CLASSES = 10


class IdxFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Raw MNIST bytes plus labels; images are produced on demand in [-1, 1]."""

    pixels: np.ndarray  # (N, 784) uint8
    labels: np.ndarray  # (N,) int64

    def __post_init__(self):
        if self.pixels.ndim != 2 or self.pixels.dtype != np.uint8:
            raise ValueError("pixels must be a 2-d uint8 array")
        if len(self.pixels) != len(self.labels):
            raise ValueError("image and label counts differ")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= N_CLASSES):
            raise ValueError("labels must lie in [0, 9]")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def images(self) -> np.ndarray:
        return normalize(self.pixels)

    def subset(self, n_or_index) -> "Dataset":
        idx = np.arange(n_or_index) if np.isscalar(n_or_index) else np.asarray(n_or_index)
        return Dataset(self.pixels[idx], self.labels[idx])

    def to_idx_bytes(self) -> tuple[bytes, bytes]:
        """Serialize back to (image file, label file) IDX bytes."""
        images = struct.pack(">IIII", IMAGE_MAGIC, len(self), ROWS, COLS) + self.pixels.tobytes()
        labels = struct.pack(">II", LABEL_MAGIC, len(self)) + self.labels.astype(np.uint8).tobytes()
        return images, labels


def normalize(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(np.float64) / 127.5 - 1.0


def denormalize(images: np.ndarray) -> np.ndarray:
    """Map [-1, 1] back to bytes, rounding to the nearest level."""
    return np.clip(np.rint((np.asarray(images) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def _read(path) -> bytes:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx_images(raw: bytes) -> np.ndarray:
    if len(raw) < 16:
        raise IdxFormatError("image file truncated inside the header")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(f"bad image magic {magic}, expected {IMAGE_MAGIC}")
    if (rows, cols) != (ROWS, COLS):
        raise IdxFormatError(f"expected 28x28 images, got {rows}x{cols}")
    body = raw[16:]
    if len(body) != count * rows * cols:
        raise IdxFormatError(f"image file body has {len(body)} bytes, header promises {count * rows * cols}")
    return np.frombuffer(body, dtype=np.uint8).reshape(count, rows * cols).copy()


def parse_idx_labels(raw: bytes) -> np.ndarray:
    if len(raw) < 8:
        raise IdxFormatError("label file truncated inside the header")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != LABEL_MAGIC:
        raise IdxFormatError(f"bad label magic {magic}, expected {LABEL_MAGIC}")
    body = raw[8:]
    if len(body) != count:
        raise IdxFormatError(f"label file body has {len(body)} bytes, header promises {count}")
    labels = np.frombuffer(body, dtype=np.uint8).astype(np.int64)
    if count and labels.max() >= N_CLASSES:
        raise IdxFormatError("label values must lie in [0, 9]")
    return labels


def load_mnist_idx(image_path, label_path) -> Dataset:
    """Load an IDX image/label pair; gzip-compressed files are accepted."""
    pixels = parse_idx_images(_read(image_path))
    labels = parse_idx_labels(_read(label_path))
    if len(pixels) != len(labels):
        raise IdxFormatError(f"{len(pixels)} images but {len(labels)} labels")
    return Dataset(pixels, labels)


_STEMS = {"train": "train", "test": "t10k"}


def find_mnist(directory, split: str = "train") -> tuple[Path, Path]:
    stem = _STEMS[split]
    directory = Path(directory)
    found = []
    for kind in ("images-idx3-ubyte", "labels-idx1-ubyte"):
        for suffix in ("", ".gz"):
            p = directory / f"{stem}-{kind}{suffix}"
            if p.exists():
                found.append(p)
                break
        else:
            raise FileNotFoundError(f"no {stem}-{kind}[.gz] in {directory}")
    return found[0], found[1]


def load_mnist(directory, split: str = "train") -> Dataset:
    return load_mnist_idx(*find_mnist(directory, split))


def default_mnist_dir() -> Path | None:
    """``$HYPGAN_MNIST_DIR`` if set and present, else ``None``."""
    env = os.environ.get("HYPGAN_MNIST_DIR")
    return Path(env) if env and Path(env).is_dir() else None


def one_hot(labels, n_classes: int = N_CLASSES) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def batches(ds, batch_size: int, rng: Rng) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """One epoch of shuffled ``(images, one-hot labels)`` batches; the last may be short.

    ``ds`` is a :class:`Dataset` or an ``(images, labels)`` pair of arrays.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if isinstance(ds, Dataset):
        source, labels, convert = ds.pixels, ds.labels, normalize
    else:
        source, labels = ds
        convert = np.asarray
    order = rng.permutation(len(labels))
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        yield convert(source[idx]), one_hot(labels[idx])


def sample_noise(batch: int, dim: int = 128, rng: Rng | None = None) -> np.ndarray:
    if dim < 1 or batch < 0:
        raise ValueError("noise shape must be positive")
    return (rng or Rng(0)).normal((batch, dim))
