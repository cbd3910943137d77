"""Dataset ingestion, synthetic data, and the federation split.

Supports the IDX binary format (MNIST / Fashion-MNIST, optionally
gzipped) and a Gaussian-blob generator for fast synthetic runs. The
federation split carves the training set into equal client partitions
and the test set into a server evaluation subset (one client-partition
in size) plus a disjoint filtering subset used to score client
submissions.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import Batch
from .vectors import RngStream

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX content: bad magic, truncated data, or count mismatch."""


@dataclass
class Dataset:
    features: np.ndarray  # [n x input_dim] float64
    labels: np.ndarray  # [n] int64, values in [0, num_classes)
    num_classes: int
    name: str

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self) < 1:
            raise ValueError("dataset must contain at least one sample")
        if self.labels.shape[0] != self.features.shape[0]:
            raise ValueError("feature/label count mismatch")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError("label out of range")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def batch(self, indices=None) -> Batch:
        if indices is None:
            return Batch(self.features, self.labels)
        return Batch(self.features[indices], self.labels[indices])


@dataclass
class FederationSplit:
    """Disjoint client partitions plus the server's eval/filter subsets."""

    client_partitions: list[np.ndarray]  # index sets into the train dataset
    server_eval: np.ndarray  # index set into the test dataset
    server_filter: np.ndarray  # index set into the test dataset, disjoint from eval


def _open_maybe_gzip(path):
    p = Path(path)
    if p.suffix == ".gz":
        return gzip.open(p, "rb")
    return open(p, "rb")


def _read_exact(fh, nbytes: int, offset: int, path) -> bytes:
    buf = fh.read(nbytes)
    if len(buf) != nbytes:
        raise IdxFormatError(
            f"{path}: truncated IDX file, wanted {nbytes} bytes at byte offset {offset}, "
            f"got {len(buf)}"
        )
    return buf


def _read_idx_header(fh, expected_magic: int, ndims: int, path) -> tuple[int, ...]:
    magic = struct.unpack(">I", _read_exact(fh, 4, 0, path))[0]
    if magic != expected_magic:
        raise IdxFormatError(
            f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    dims = struct.unpack(
        f">{ndims}I", _read_exact(fh, 4 * ndims, 4, path)
    )
    return dims


def load_idx(images_path, labels_path, name: str = "idx") -> Dataset:
    """Parse an IDX image/label file pair into a Dataset.

    Pixels are scaled to [0, 1] by dividing by 255; images are flattened
    row-major to input_dim = rows * cols. Files ending in ``.gz`` are
    decompressed transparently.
    """
    with _open_maybe_gzip(images_path) as fh:
        n, rows, cols = _read_idx_header(fh, IDX_IMAGES_MAGIC, 3, images_path)
        raw = _read_exact(fh, n * rows * cols, 16, images_path)
    images = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    images = images.reshape(n, rows * cols)

    with _open_maybe_gzip(labels_path) as fh:
        (n_labels,) = _read_idx_header(fh, IDX_LABELS_MAGIC, 1, labels_path)
        raw = _read_exact(fh, n_labels, 8, labels_path)
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    if n_labels != n:
        raise IdxFormatError(
            f"image/label count mismatch: {images_path} has {n}, {labels_path} has {n_labels}"
        )
    num_classes = int(labels.max()) + 1
    return Dataset(images, labels, num_classes=num_classes, name=name)


def synth_blobs(
    rng: RngStream, n: int, num_classes: int, input_dim: int, separation: float
) -> Dataset:
    """Isotropic unit-variance Gaussian clusters, one per class.

    Cluster c is centered at separation * e_c for c < input_dim and at
    -separation * e_(c - input_dim) beyond that; class sizes are equal
    up to +/-1 (the first n % C classes get the extra sample).
    """
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if n < num_classes:
        raise ValueError(f"need n >= num_classes, got n={n}, C={num_classes}")
    if separation < 0:
        raise ValueError("separation must be >= 0")
    if num_classes > 2 * input_dim:
        raise ValueError(
            f"input_dim={input_dim} too small to place {num_classes} cluster centers"
        )
    base, extra = divmod(n, num_classes)
    feats = []
    labels = []
    for c in range(num_classes):
        size = base + (1 if c < extra else 0)
        mean = np.zeros(input_dim)
        if c < input_dim:
            mean[c] = separation
        else:
            mean[c - input_dim] = -separation
        feats.append(rng.normal(0.0, 1.0, (size, input_dim)) + mean)
        labels.append(np.full(size, c, dtype=np.int64))
    return Dataset(
        np.concatenate(feats), np.concatenate(labels), num_classes=num_classes, name="synth"
    )


def make_split(
    train: Dataset, test: Dataset, num_clients: int, rng: RngStream
) -> FederationSplit:
    """Shuffle-and-slice IID split across clients plus the server split.

    Client partitions are equal in size up to +/-1 (the first remainder
    clients take one extra sample). The server carves an evaluation
    subset of one base client-partition size out of the shuffled test
    set; the rest becomes the filtering subset.
    """
    if num_clients < 2:
        raise ValueError("need at least 2 clients")
    n_train, n_test = len(train), len(test)
    if n_train < num_clients:
        raise ValueError("fewer training samples than clients")
    base, extra = divmod(n_train, num_clients)
    if n_test <= base:
        raise ValueError(
            f"test set too small: need more than {base} samples to carve the "
            f"evaluation subset, got {n_test}"
        )
    perm = rng.permutation(n_train)
    partitions = []
    start = 0
    for i in range(num_clients):
        size = base + (1 if i < extra else 0)
        partitions.append(np.sort(perm[start : start + size]))
        start += size
    test_perm = rng.permutation(n_test)
    server_eval = np.sort(test_perm[:base])
    server_filter = np.sort(test_perm[base:])
    return FederationSplit(partitions, server_eval, server_filter)


def subsample_filter(split: FederationSplit, m_s: int, rng: RngStream) -> np.ndarray:
    """Uniform sample without replacement of m_s filtering indices (sorted)."""
    avail = len(split.server_filter)
    if not 1 <= m_s <= avail:
        raise ValueError(f"filter subsample size {m_s} out of range [1, {avail}]")
    return np.sort(rng.choice(split.server_filter, size=m_s, replace=False))
