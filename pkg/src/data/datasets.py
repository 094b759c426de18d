"""
MNIST (IDX) and CIFAR-10 (binary version) loaders
"""

import gzip
import logging
import os
import struct
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import ConfigurationError, DataFormatError

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073
CIFAR_SHAPE = (3, 32, 32)

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_FILES = {
    "train": tuple(f"data_batch_{i}.bin" for i in range(1, 6)),
    "test": ("test_batch.bin",),
}


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    split: str
    name: str = "dataset"
    num_classes: int = 10

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DataFormatError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataFormatError(f"labels outside [0, {self.num_classes})")

    def __len__(self):
        return len(self.labels)

    @property
    def sample_shape(self) -> Tuple[int, ...]:
        return tuple(self.images.shape[1:])

    def subset(self, size: Optional[int]) -> "Dataset":
        """First ``size`` samples (the whole set when size is None or larger)"""
        if size is None or size >= len(self):
            if size is not None and size > len(self):
                logger.warning(f"Requested subset of {size} but {self.name}/{self.split} has only {len(self)} samples")
            return self
        return Dataset(self.images[:size], self.labels[:size], self.split, self.name, self.num_classes)


def _read_bytes(path: str) -> bytes:
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def _parse_idx_images(raw: bytes, path: str) -> np.ndarray:
    if len(raw) < 16:
        raise DataFormatError(f"{path}: truncated IDX image header ({len(raw)} bytes)")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise DataFormatError(f"{path}: bad IDX image magic 0x{magic:08x}")
    expected = count * rows * cols
    if len(raw) - 16 < expected:
        raise DataFormatError(f"{path}: truncated, header promises {count} images of {rows}×{cols}")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=expected, offset=16)
    return pixels.reshape(count, 1, rows, cols)


def _parse_idx_labels(raw: bytes, path: str) -> np.ndarray:
    if len(raw) < 8:
        raise DataFormatError(f"{path}: truncated IDX label header ({len(raw)} bytes)")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != IDX_LABEL_MAGIC:
        raise DataFormatError(f"{path}: bad IDX label magic 0x{magic:08x}")
    if len(raw) - 8 < count:
        raise DataFormatError(f"{path}: truncated, header promises {count} labels")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=8).astype(np.int64)


def load_mnist_idx(images_path: str, labels_path: str, split: str = "train") -> Dataset:
    """Read an IDX image/label file pair; pixels are scaled to [0, 1]"""
    images = _parse_idx_images(_read_bytes(images_path), images_path)
    labels = _parse_idx_labels(_read_bytes(labels_path), labels_path)
    if len(images) != len(labels):
        raise DataFormatError(f"image/label count mismatch: {len(images)} images vs {len(labels)} labels")
    logger.info(f"Loaded MNIST {split}: {len(labels)} samples from {images_path}")
    return Dataset((images.astype(np.float32) / 255.0), labels, split, name="mnist")


def _parse_cifar_records(raw: bytes, path: str) -> Tuple[np.ndarray, np.ndarray]:
    if not raw:
        raise DataFormatError(f"{path}: empty CIFAR-10 batch file")
    if len(raw) % CIFAR_RECORD_BYTES:
        raise DataFormatError(f"{path}: size {len(raw)} is not a multiple of the {CIFAR_RECORD_BYTES}-byte record")
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    if labels.max() > 9:
        raise DataFormatError(f"{path}: label byte {labels.max()} outside [0, 9]")
    return records[:, 1:].reshape((-1,) + CIFAR_SHAPE), labels


def load_cifar10_bin(batch_paths: Sequence[str], split: str = "train") -> Dataset:
    """Concatenate CIFAR-10 binary batches (1 label byte + 3072 channel-planar pixels per record)"""
    images, labels = [], []
    for path in batch_paths:
        x, y = _parse_cifar_records(_read_bytes(path), path)
        images.append(x)
        labels.append(y)
    if not images:
        raise DataFormatError("no CIFAR-10 batch files given")
    data = np.concatenate(images).astype(np.float32) / 255.0
    logger.info(f"Loaded CIFAR-10 {split}: {len(data)} samples from {len(batch_paths)} file(s)")
    return Dataset(data, np.concatenate(labels), split, name="cifar10")


def _locate(data_dir: str, filename: str) -> str:
    candidates = [filename, f"{filename}.gz", filename.replace("-idx", ".idx")]
    for root in (data_dir, os.path.join(data_dir, "cifar-10-batches-bin")):
        for name in candidates:
            path = os.path.join(root, name)
            if os.path.exists(path):
                return path
    raise FileNotFoundError(f"{filename} not found under {data_dir}")


def load_dataset(name: str, data_dir: str, split: str, subset: Optional[int] = None) -> Dataset:
    """Resolve canonical file names inside ``data_dir`` and load one split"""
    if split not in ("train", "test"):
        raise ConfigurationError(f"split must be 'train' or 'test', got {split!r}")
    if name == "mnist":
        images_name, labels_name = MNIST_FILES[split]
        ds = load_mnist_idx(_locate(data_dir, images_name), _locate(data_dir, labels_name), split)
    elif name == "cifar10":
        ds = load_cifar10_bin([_locate(data_dir, f) for f in CIFAR_FILES[split]], split)
    else:
        raise ConfigurationError(f"Unknown dataset '{name}'. Valid options: ['cifar10', 'mnist']")
    return ds.subset(subset)


def batch_indices(
    n: int, batch_size: int, shuffle: bool, rng: Optional[np.random.Generator] = None
) -> List[np.ndarray]:
    """One epoch's partition of range(n); the last partial batch is kept"""
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(n)
    if shuffle:
        order = (rng or np.random.default_rng(0)).permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def batch_iterator(
    ds: Dataset, batch_size: int, shuffle: bool, rng: Optional[np.random.Generator] = None
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    for idx in batch_indices(len(ds), batch_size, shuffle, rng):
        yield ds.images[idx], ds.labels[idx]
