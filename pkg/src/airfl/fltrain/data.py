"""MNIST ingestion and IID partitioning.

IDX files (optionally gzip-compressed) are parsed directly. When no paths
are configured, the 5000-sample MNIST subset bundled with ``mlxtend`` is
used instead (install the ``mnist`` extra).
"""

import gzip
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .._validation import ConfigurationError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
IMAGE_SIDE = 28
N_FEATURES = IMAGE_SIDE * IMAGE_SIDE
N_CLASSES = 10


class IdxFormatError(ValueError):
    """Malformed IDX file; the message names the offending byte offset."""

    def __init__(self, path, offset, message):
        super().__init__(f"{path}: byte offset {offset}: {message}")
        self.path = str(path)
        self.offset = offset


@dataclass(frozen=True)
class Dataset:
    """Flattened images scaled to [0, 1] and their digit labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim != 2 or X.shape[1] != N_FEATURES:
            raise ValueError(f"features must have shape (n, {N_FEATURES}); got {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError("labels must be a vector with one entry per row of features")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if y.size and (not np.issubdtype(y.dtype, np.integer) or y.min() < 0 or y.max() >= N_CLASSES):
            raise ValueError(f"labels must be integers in [0, {N_CLASSES - 1}]")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y.astype(np.int64))

    def __len__(self):
        return self.labels.size

    def subset(self, index):
        return Dataset(self.features[index], self.labels[index])


def _read_bytes(path):
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _header(raw, path, n_fields, magic):
    need = 4 * n_fields
    if len(raw) < need:
        raise IdxFormatError(path, len(raw), f"truncated header, expected {need} bytes")
    fields = np.frombuffer(raw[:need], dtype=">u4").astype(np.int64)
    if fields[0] != magic:
        raise IdxFormatError(path, 0, f"magic 0x{int(fields[0]):08x}, expected 0x{magic:08x}")
    return fields[1:]


def read_idx_images(path):
    """Unsigned-byte image tensor ``(count, 28, 28)`` from an IDX3 file."""
    raw = _read_bytes(path)
    count, rows, cols = _header(raw, path, 4, IMAGE_MAGIC)
    if rows != IMAGE_SIDE or cols != IMAGE_SIDE:
        raise IdxFormatError(path, 8, f"image size {rows}x{cols}, expected {IMAGE_SIDE}x{IMAGE_SIDE}")
    end = 16 + count * rows * cols
    if len(raw) < end:
        raise IdxFormatError(path, len(raw), f"truncated payload, expected {end} bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=count * rows * cols, offset=16).reshape(
        count, rows, cols)


def read_idx_labels(path):
    """Unsigned-byte label vector from an IDX1 file."""
    raw = _read_bytes(path)
    (count,) = _header(raw, path, 2, LABEL_MAGIC)
    end = 8 + count
    if len(raw) < end:
        raise IdxFormatError(path, len(raw), f"truncated payload, expected {end} bytes")
    labels = np.frombuffer(raw, dtype=np.uint8, count=count, offset=8)
    bad = np.flatnonzero(labels >= N_CLASSES)
    if bad.size:
        raise IdxFormatError(path, 8 + int(bad[0]), f"label {labels[bad[0]]} out of range")
    return labels


def load_mnist_idx(images_path, labels_path):
    """Parse an IDX image/label pair into a ``Dataset`` with pixels scaled to [0, 1]."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(labels_path, 4,
                             f"{labels.shape[0]} labels for {images.shape[0]} images")
    return Dataset(images.reshape(-1, N_FEATURES) / 255.0, labels.astype(np.int64))


def load_bundled_mnist():
    """The 5000-image MNIST subset shipped with ``mlxtend`` (500 per class)."""
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise ConfigurationError(
            "no MNIST paths configured and mlxtend is not installed; "
            "install the 'mnist' extra or point the config at IDX files") from exc
    X, y = mnist_data()
    return Dataset(X / 255.0, y.astype(np.int64))


def holdout_split(ds, test_size, rng=None):
    """Random ``(train, test)`` split with ``test_size`` held-out samples."""
    if not 0 < test_size < len(ds):
        raise ConfigurationError(f"test_size must lie in (0, {len(ds)}); got {test_size}")
    perm = np.random.default_rng(rng).permutation(len(ds))
    return ds.subset(np.sort(perm[test_size:])), ds.subset(np.sort(perm[:test_size]))


def partition_iid(ds, n_users, samples_per_user, rng=None):
    """Disjoint uniformly random shards; ``samples_per_user`` is a scalar or one count per user."""
    counts = np.broadcast_to(np.asarray(samples_per_user, dtype=int), (n_users,))
    if n_users < 1 or np.any(counts < 1):
        raise ConfigurationError("need at least one user and one sample per user")
    need = int(counts.sum())
    if need > len(ds):
        raise ConfigurationError(f"{n_users} shards need {need} samples; dataset has {len(ds)}")
    perm = np.random.default_rng(rng).permutation(len(ds))[:need]
    bounds = np.concatenate([[0], np.cumsum(counts)])
    return [ds.subset(perm[bounds[u]:bounds[u + 1]]) for u in range(n_users)]


def write_idx(images, labels, images_path, labels_path):
    """Write uint8 images ``(n, 28, 28)`` and labels as uncompressed IDX files (test fixtures)."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    head = np.array([IMAGE_MAGIC, images.shape[0], images.shape[1], images.shape[2]], dtype=">u4")
    Path(images_path).write_bytes(head.tobytes() + images.tobytes())
    head = np.array([LABEL_MAGIC, labels.shape[0]], dtype=">u4")
    Path(labels_path).write_bytes(head.tobytes() + labels.tobytes())
