"""Loaders for the MNIST IDX and CIFAR-10 binary formats.

Both formats are parsed bit-exactly from their public layouts: IDX files
carry a big-endian magic/dimension header followed by raw unsigned
bytes; CIFAR-10 batches are fixed 3073-byte records (1 label byte +
3072 pixel bytes in channel-major order).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["Dataset", "IdxFormatError", "load_mnist_idx", "load_cifar10_bin"]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073


class IdxFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Images as raw unsigned bytes plus integer labels."""

    images: np.ndarray       # uint8, (N, ...) pixel tensor
    labels: np.ndarray       # int64, (N,)
    split: str = ""
    num_classes: int = 10

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"image count {self.images.shape[0]} != label count "
                f"{self.labels.shape[0]}")
        if self.labels.size and not (
                0 <= self.labels.min() and self.labels.max() < self.num_classes):
            raise ValueError("label outside [0, num_classes)")

    def __len__(self):
        return self.images.shape[0]

    def normalized(self) -> np.ndarray:
        """Pixels scaled to [0, 1] as float64."""
        return self.images.astype(np.float64) / 255.0


def _read_idx_header(blob: bytes, expected_magic: int, ndim: int, path):
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise IdxFormatError(f"{path}: truncated header ({len(blob)} bytes)")
    magic = struct.unpack(">I", blob[:4])[0]
    if magic != expected_magic:
        raise IdxFormatError(
            f"{path}: bad magic 0x{magic:08x} at offset 0 "
            f"(expected 0x{expected_magic:08x})")
    dims = struct.unpack(f">{ndim}I", blob[4:header])
    return dims, header


def load_mnist_idx(images_path, labels_path, split: str = "") -> Dataset:
    """Parse an MNIST-style IDX image/label file pair.

    Pixels stay as raw uint8; use Dataset.normalized() for the [0, 1]
    float view consumed by training.
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    img_blob = images_path.read_bytes()
    (count, rows, cols), off = _read_idx_header(
        img_blob, IDX_IMAGES_MAGIC, 3, images_path)
    expected = count * rows * cols
    payload = img_blob[off:]
    if len(payload) != expected:
        raise IdxFormatError(
            f"{images_path}: payload holds {len(payload)} bytes, header "
            f"promises {expected}")
    images = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)

    lbl_blob = labels_path.read_bytes()
    (lbl_count,), lbl_off = _read_idx_header(
        lbl_blob, IDX_LABELS_MAGIC, 1, labels_path)
    lbl_payload = lbl_blob[lbl_off:]
    if len(lbl_payload) != lbl_count:
        raise IdxFormatError(
            f"{labels_path}: payload holds {len(lbl_payload)} bytes, header "
            f"promises {lbl_count}")
    if lbl_count != count:
        raise IdxFormatError(
            f"count mismatch: {count} images vs {lbl_count} labels")
    labels = np.frombuffer(lbl_payload, dtype=np.uint8).astype(np.int64)
    return Dataset(images=images, labels=labels, split=split)


def load_cifar10_bin(paths, split: str = "") -> Dataset:
    """Parse one or more CIFAR-10 binary batch files.

    Each record is 1 label byte followed by 3072 pixel bytes
    (3 x 32 x 32, channel-major).
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    chunks = []
    for path in paths:
        blob = Path(path).read_bytes()
        if len(blob) == 0:
            raise IdxFormatError(f"{path}: empty file")
        if len(blob) % CIFAR_RECORD_BYTES != 0:
            raise IdxFormatError(
                f"{path}: {len(blob)} bytes is not a whole number of "
                f"{CIFAR_RECORD_BYTES}-byte records")
        chunks.append(np.frombuffer(blob, dtype=np.uint8).reshape(
            -1, CIFAR_RECORD_BYTES))
    records = np.concatenate(chunks, axis=0)
    labels = records[:, 0].astype(np.int64)
    if labels.max(initial=0) >= 10:
        bad = int(np.argmax(labels >= 10))
        raise IdxFormatError(f"record {bad}: label {labels[bad]} >= 10")
    images = records[:, 1:].reshape(-1, 3, 32, 32)
    return Dataset(images=images, labels=labels, split=split)
