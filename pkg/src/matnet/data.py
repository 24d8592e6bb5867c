"""Training data: the XOR truth table, sine samples, and an IDX image parser
with class filtering and one-hot labels."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .linalg import ShapeError

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


class IdxFormatError(ValueError):
    """An IDX file is malformed, truncated, or inconsistent."""


@dataclass(frozen=True)
class Dataset:
    """Ordered (input, target) pairs with uniform widths."""

    samples: tuple[tuple[np.ndarray, np.ndarray], ...]
    input_width: int
    target_width: int

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def inputs(self) -> np.ndarray:
        return np.array([x for x, _ in self.samples])

    @property
    def targets(self) -> np.ndarray:
        return np.array([y for _, y in self.samples])

    @classmethod
    def from_pairs(cls, pairs, input_width=None, target_width=None) -> "Dataset":
        """Build a dataset, inferring widths from the first pair.

        Explicit widths are required for an (intentionally) empty dataset.
        """
        samples = []
        for x, y in pairs:
            x = np.atleast_1d(np.asarray(x, dtype=float))
            y = np.atleast_1d(np.asarray(y, dtype=float))
            if not (np.isfinite(x).all() and np.isfinite(y).all()):
                raise ValueError("dataset entries must be finite")
            samples.append((x, y))
        if samples:
            input_width = samples[0][0].shape[0]
            target_width = samples[0][1].shape[0]
        elif input_width is None or target_width is None:
            raise ShapeError("empty dataset needs explicit input/target widths")
        for i, (x, y) in enumerate(samples):
            if x.shape != (input_width,) or y.shape != (target_width,):
                raise ShapeError(
                    f"sample {i} has shapes {x.shape}/{y.shape}, expected "
                    f"({input_width},)/({target_width},)"
                )
        return cls(tuple(samples), input_width, target_width)


def xor_dataset() -> Dataset:
    """The four rows of the XOR truth table, in table order."""
    rows = [
        ([0.0, 0.0], [0.0]),
        ([0.0, 1.0], [1.0]),
        ([1.0, 0.0], [1.0]),
        ([1.0, 1.0], [0.0]),
    ]
    return Dataset.from_pairs(rows)


def sine_dataset(count: int) -> Dataset:
    """count linearly spaced points on [-pi/2, pi/2] with targets sin(x)."""
    if count < 2:
        raise ValueError(f"sine dataset needs at least 2 points, got {count}")
    xs = np.linspace(-np.pi / 2.0, np.pi / 2.0, count)
    return Dataset.from_pairs([([x], [np.sin(x)]) for x in xs])


@dataclass(frozen=True)
class MnistSet:
    """Raw images (one flattened row per image, pixels scaled to [0, 1])
    and their integer labels."""

    pixels: np.ndarray
    labels: np.ndarray
    rows: int
    cols: int

    def __len__(self) -> int:
        return self.pixels.shape[0]


def _read_be32(f, path: str, what: str) -> int:
    data = f.read(4)
    if len(data) < 4:
        raise IdxFormatError(f"{path}: truncated while reading {what}")
    return struct.unpack(">i", data)[0]


def mnist_load(images_path, labels_path) -> MnistSet:
    """Parse an IDX image/label file pair.

    Image file layout (big endian): i32 magic 2051, i32 count, i32 rows,
    i32 cols, then count*rows*cols pixel bytes. Label file: i32 magic 2049,
    i32 count, then count label bytes. Pixels are divided by 255.
    """
    images_path = str(images_path)
    labels_path = str(labels_path)
    with open(images_path, "rb") as f:
        magic = _read_be32(f, images_path, "image magic")
        if magic != IMAGE_MAGIC:
            raise IdxFormatError(
                f"{images_path}: expected image magic {IMAGE_MAGIC}, got {magic}"
            )
        count = _read_be32(f, images_path, "image count")
        rows = _read_be32(f, images_path, "row count")
        cols = _read_be32(f, images_path, "column count")
        raw = f.read(count * rows * cols)
        if len(raw) < count * rows * cols:
            raise IdxFormatError(
                f"{images_path}: expected {count * rows * cols} pixel bytes, "
                f"got {len(raw)}"
            )
    pixels = np.frombuffer(raw, dtype=np.uint8).astype(float).reshape(count, rows * cols)
    pixels = pixels / 255.0

    with open(labels_path, "rb") as f:
        magic = _read_be32(f, labels_path, "label magic")
        if magic != LABEL_MAGIC:
            raise IdxFormatError(
                f"{labels_path}: expected label magic {LABEL_MAGIC}, got {magic}"
            )
        label_count = _read_be32(f, labels_path, "label count")
        raw = f.read(label_count)
        if len(raw) < label_count:
            raise IdxFormatError(
                f"{labels_path}: expected {label_count} label bytes, got {len(raw)}"
            )
    labels = np.frombuffer(raw, dtype=np.uint8).astype(int)
    if label_count != count:
        raise IdxFormatError(
            f"image count {count} does not match label count {label_count}"
        )
    return MnistSet(pixels, labels, rows, cols)


def mnist_subset(mset: MnistSet, classes, per_class: int) -> Dataset:
    """First per_class images of each listed class, in file order, with
    one-hot targets ordered by position in the classes list."""
    classes = list(classes)
    if len(set(classes)) != len(classes):
        raise ValueError(f"classes must be distinct, got {classes}")
    for c in classes:
        if not 0 <= c <= 9:
            raise ValueError(f"class labels must be 0-9, got {c}")
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    pairs = []
    for position, c in enumerate(classes):
        idx = np.flatnonzero(mset.labels == c)
        if idx.shape[0] < per_class:
            raise ValueError(
                f"class {c} has only {idx.shape[0]} samples, need {per_class}"
            )
        onehot = np.zeros(len(classes))
        onehot[position] = 1.0
        for i in idx[:per_class]:
            pairs.append((mset.pixels[i], onehot.copy()))
    return Dataset.from_pairs(pairs)
