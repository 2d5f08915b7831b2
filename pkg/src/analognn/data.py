"""Dataset ingestion: IDX (MNIST family), CIFAR-10 binary, splits, batching.

Images are held as the raw bytes and exposed as float64 in [0,1] (exact
byte/255) on access, which keeps a 60k-image dataset under 50MB resident.
Batches materialize only their own slice.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .rng import RngStream
from .tensor import Tensor

__all__ = [
    "Dataset", "DatasetView", "SplitPlan",
    "load_idx", "write_idx", "load_cifar10", "grayscale",
    "split", "batches", "load_dataset", "dataset_paths", "DATASET_NAMES",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

DATASET_NAMES = ("mnist", "fashion_mnist", "cifar10", "cifar10_gray")

# streams for data plumbing live in their own path namespaces so they never
# collide with model-init or forward-pass streams derived from the same seed
_SPLIT_DOMAIN = 0x5917
_SHUFFLE_DOMAIN = 0xDA7A


class Dataset:
    """Labeled image set. `images` is [N,C,H,W] float64 in [0,1]."""

    __slots__ = ("name", "labels", "_bytes", "_floats")

    def __init__(self, name: str, labels: np.ndarray, *, raw_bytes=None, floats=None):
        if (raw_bytes is None) == (floats is None):
            raise ValueError("exactly one of raw_bytes/floats required")
        self.name = name
        self.labels = np.asarray(labels, dtype=np.int64)
        self._bytes = raw_bytes
        self._floats = floats
        if self.labels.shape != (self.n,):
            raise DataFormatError(f"{name}: {self.labels.shape[0]} labels for {self.n} images")

    @property
    def n(self) -> int:
        arr = self._bytes if self._bytes is not None else self._floats
        return arr.shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        arr = self._bytes if self._bytes is not None else self._floats
        return tuple(arr.shape[1:])

    @property
    def images(self) -> np.ndarray:
        if self._floats is not None:
            return self._floats
        return self._bytes.astype(np.float64) / 255.0

    def image_slice(self, indices: np.ndarray) -> np.ndarray:
        if self._floats is not None:
            return self._floats[indices]
        return self._bytes[indices].astype(np.float64) / 255.0


@dataclass(frozen=True)
class DatasetView:
    """Index-selected subset of a dataset; shares the underlying storage."""

    dataset: Dataset
    indices: np.ndarray

    @property
    def n(self) -> int:
        return len(self.indices)

    @property
    def labels(self) -> np.ndarray:
        return self.dataset.labels[self.indices]


@dataclass(frozen=True)
class SplitPlan:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0,1), got {self.train_fraction}")


def _read_file(path) -> bytes:
    data = Path(path).read_bytes()
    if data[:2] == b"\x1f\x8b":
        return gzip.decompress(data)
    return data


def _idx_header(buf: bytes, path, expected_magic: int, n_dims: int) -> tuple[int, ...]:
    header_len = 4 + 4 * n_dims
    if len(buf) < header_len:
        raise DataFormatError(f"{path}: truncated header, {len(buf)} bytes "
                              f"(needs {header_len}); offset {len(buf)}")
    magic = struct.unpack(">i", buf[:4])[0]
    if magic != expected_magic:
        raise DataFormatError(f"{path}: bad magic 0x{magic:08x} at offset 0, "
                              f"expected 0x{expected_magic:08x}")
    return struct.unpack(f">{n_dims}i", buf[4:header_len])


def load_idx(images_path, labels_path) -> Dataset:
    """Parse an IDX image/label file pair (raw or gzip)."""
    ibuf = _read_file(images_path)
    n, rows, cols = _idx_header(ibuf, images_path, IDX_IMAGES_MAGIC, 3)
    expected = 16 + n * rows * cols
    if len(ibuf) != expected:
        raise DataFormatError(f"{images_path}: expected {expected} bytes for "
                              f"{n}x{rows}x{cols} images, got {len(ibuf)}; "
                              f"offset {min(len(ibuf), expected)}")
    images = np.frombuffer(ibuf, dtype=np.uint8, offset=16).reshape(n, 1, rows, cols)

    lbuf = _read_file(labels_path)
    (ln,) = _idx_header(lbuf, labels_path, IDX_LABELS_MAGIC, 1)
    if len(lbuf) != 8 + ln:
        raise DataFormatError(f"{labels_path}: expected {8 + ln} bytes for {ln} labels, "
                              f"got {len(lbuf)}; offset {min(len(lbuf), 8 + ln)}")
    if ln != n:
        raise DataFormatError(f"{labels_path}: {ln} labels for {n} images")
    labels = np.frombuffer(lbuf, dtype=np.uint8, offset=8).astype(np.int64)
    name = Path(images_path).name.split("-")[0]
    return Dataset(name, labels, raw_bytes=images)


def write_idx(ds: Dataset, images_path, labels_path) -> None:
    """Serialize back to IDX; inverse of load_idx for byte-backed datasets.
    Paths ending in .gz are gzip-compressed."""
    if ds._bytes is not None:
        raw = ds._bytes
    else:
        raw = np.rint(ds._floats * 255.0).astype(np.uint8)
    n, c, rows, cols = raw.shape
    if c != 1:
        raise DataFormatError(f"IDX stores single-channel images, got C={c}")
    ibuf = struct.pack(">4i", IDX_IMAGES_MAGIC, n, rows, cols) + raw.tobytes()
    lbuf = struct.pack(">2i", IDX_LABELS_MAGIC, n) + ds.labels.astype(np.uint8).tobytes()
    for path, buf in ((images_path, ibuf), (labels_path, lbuf)):
        path = Path(path)
        if path.suffix == ".gz":
            path.write_bytes(gzip.compress(buf))
        else:
            path.write_bytes(buf)


_CIFAR_RECORD = 3073


def load_cifar10(batch_files) -> Dataset:
    """Parse CIFAR-10 binary batches (1 label byte + 3072 channel-major pixels)."""
    images, labels = [], []
    for path in batch_files:
        buf = _read_file(path)
        if len(buf) % _CIFAR_RECORD:
            raise DataFormatError(f"{path}: size {len(buf)} is not a multiple of "
                                  f"{_CIFAR_RECORD}; offset {len(buf) - len(buf) % _CIFAR_RECORD}")
        rec = np.frombuffer(buf, dtype=np.uint8).reshape(-1, _CIFAR_RECORD)
        lab = rec[:, 0]
        bad = np.flatnonzero(lab > 9)
        if bad.size:
            raise DataFormatError(f"{path}: label {int(lab[bad[0]])} out of range at "
                                  f"offset {int(bad[0]) * _CIFAR_RECORD}")
        labels.append(lab.astype(np.int64))
        images.append(rec[:, 1:].reshape(-1, 3, 32, 32))
    if not images:
        raise DataFormatError("load_cifar10: no batch files given")
    return Dataset("cifar10", np.concatenate(labels), raw_bytes=np.concatenate(images))


def grayscale(ds: Dataset) -> Dataset:
    """ITU-R 601 luma: 0.299 R + 0.587 G + 0.114 B, keeping values in [0,1]."""
    img = ds.images
    if img.shape[1] != 3:
        raise DataFormatError(f"grayscale: expected 3 channels, got {img.shape[1]}")
    weights = np.array([0.299, 0.587, 0.114])
    gray = np.tensordot(weights, img, axes=([0], [1]))[:, None, :, :]
    return Dataset(f"{ds.name}_gray", ds.labels, floats=gray)


def split(ds: Dataset, plan: SplitPlan) -> tuple[DatasetView, DatasetView]:
    """Deterministic shuffled partition into (train, eval) views."""
    perm = RngStream(plan.seed, (_SPLIT_DOMAIN,)).permutation(ds.n)
    n_train = int(ds.n * plan.train_fraction)
    return DatasetView(ds, perm[:n_train]), DatasetView(ds, perm[n_train:])


def _as_view(ds) -> DatasetView:
    if isinstance(ds, DatasetView):
        return ds
    return DatasetView(ds, np.arange(ds.n))


def batches(ds, batch_size: int, shuffle_seed: int, epoch: int, shuffle: bool = True):
    """Yield (Tensor[N,C,H,W], labels) minibatches.

    Order is keyed by (shuffle_seed, epoch); the last partial batch is
    included. shuffle=False iterates the view in stored order.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    view = _as_view(ds)
    if shuffle:
        order = RngStream(shuffle_seed, (_SHUFFLE_DOMAIN, epoch)).permutation(view.n)
    else:
        order = np.arange(view.n)
    idx = view.indices[order]
    labels = view.dataset.labels
    for start in range(0, len(idx), batch_size):
        sel = idx[start:start + batch_size]
        yield Tensor(view.dataset.image_slice(sel)), labels[sel]


# path resolution -----------------------------------------------------------

_IDX_FILES = {
    True: ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    False: ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _find(base: Path, stem: str) -> Path:
    for cand in (base / stem, base / (stem + ".gz")):
        if cand.exists():
            return cand
    raise FileNotFoundError(f"missing dataset file {base / stem}[.gz] "
                            f"(run scripts/fetch_data.py or pass --data-dir)")


def dataset_paths(name: str, data_dir, train: bool) -> list[Path]:
    """Resolve the on-disk files backing a named dataset."""
    root = Path(data_dir)
    if name in ("mnist", "fashion_mnist"):
        base = root / name
        istem, lstem = _IDX_FILES[train]
        return [_find(base, istem), _find(base, lstem)]
    if name in ("cifar10", "cifar10_gray"):
        for sub in ("cifar10", "cifar-10-batches-bin"):
            base = root / sub
            if base.is_dir():
                break
        names = [f"data_batch_{i}.bin" for i in range(1, 6)] if train else ["test_batch.bin"]
        return [_find(base, n) for n in names]
    raise ValueError(f"unknown dataset {name!r}; expected one of {DATASET_NAMES}")


def load_dataset(name: str, data_dir, train: bool = True) -> Dataset:
    """Load a named dataset from `data_dir` (see dataset_paths for layout)."""
    if name in ("mnist", "fashion_mnist"):
        images, labels = dataset_paths(name, data_dir, train)
        ds = load_idx(images, labels)
        return Dataset(name, ds.labels, raw_bytes=ds._bytes)
    if name in ("cifar10", "cifar10_gray"):
        ds = load_cifar10(dataset_paths(name, data_dir, train))
        return grayscale(ds) if name == "cifar10_gray" else ds
    raise ValueError(f"unknown dataset {name!r}; expected one of {DATASET_NAMES}")
