"""CIFAR-10 binary ingestion.

The on-disk format is the standard one: records of 3073 bytes, a label byte
followed by the 1024-byte R, G and B planes in row-major order. Bytes are
preserved exactly; conversion to float happens downstream.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

RECORD_BYTES = 3073
IMAGE_SHAPE = (3, 32, 32)
NUM_CLASSES = 10
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"
LABEL_NAMES = (
    "airplane", "automobile", "bird", "cat", "deer",
    "dog", "frog", "horse", "ship", "truck",
)


@dataclass
class Cifar10Set:
    """images: (N, 3, 32, 32) uint8; labels: (N,) uint8 in 0..9."""

    images: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return self.images.shape[0]

    def subset(self, n):
        n = min(n, len(self))
        return Cifar10Set(images=self.images[:n], labels=self.labels[:n])


def read_cifar_file(path):
    """Parse one .bin file of 3073-byte records."""
    path = Path(path)
    raw = np.frombuffer(path.read_bytes(), dtype=np.uint8)
    if raw.size == 0 or raw.size % RECORD_BYTES != 0:
        lower = (raw.size // RECORD_BYTES) * RECORD_BYTES
        raise FormatError(
            f"{path}: {raw.size} bytes is not a positive multiple of "
            f"{RECORD_BYTES} (nearest record boundaries: {lower} and "
            f"{lower + RECORD_BYTES})"
        )
    records = raw.reshape(-1, RECORD_BYTES)
    labels = records[:, 0].copy()
    bad = np.flatnonzero(labels >= NUM_CLASSES)
    if bad.size:
        raise DataError(
            f"{path}: label {labels[bad[0]]} out of range at record {bad[0]}"
        )
    images = records[:, 1:].reshape(-1, *IMAGE_SHAPE).copy()
    return Cifar10Set(images=images, labels=labels)


def _concat(sets):
    return Cifar10Set(
        images=np.concatenate([s.images for s in sets]),
        labels=np.concatenate([s.labels for s in sets]),
    )


def _resolve_dir(path):
    path = Path(path)
    nested = path / "cifar-10-batches-bin"
    if not (path / TRAIN_FILES[0]).exists() and (nested / TRAIN_FILES[0]).exists():
        return nested
    return path


def load_cifar10(path):
    """Load a training set: either a single .bin file or a directory holding
    the five standard data_batch_*.bin files (a nested cifar-10-batches-bin
    directory is also accepted)."""
    path = Path(path)
    if path.is_file():
        return read_cifar_file(path)
    root = _resolve_dir(path)
    missing = [name for name in TRAIN_FILES if not (root / name).exists()]
    if missing:
        raise FormatError(f"{root}: missing train files {missing}")
    return _concat([read_cifar_file(root / name) for name in TRAIN_FILES])


def load_cifar10_test(path):
    """Load test_batch.bin from a dataset directory (or parse a given file)."""
    path = Path(path)
    if path.is_file():
        return read_cifar_file(path)
    return read_cifar_file(_resolve_dir(path) / TEST_FILE)


def write_cifar_file(path, images, labels):
    """Write records in the standard binary layout (exact byte round-trip)."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if images.ndim != 4 or images.shape[1:] != IMAGE_SHAPE:
        raise FormatError(f"images must be (N, 3, 32, 32), got {images.shape}")
    if labels.shape != (images.shape[0],):
        raise FormatError("labels must be one byte per image")
    records = np.empty((images.shape[0], RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = labels
    records[:, 1:] = images.reshape(images.shape[0], -1)
    Path(path).write_bytes(records.tobytes())
