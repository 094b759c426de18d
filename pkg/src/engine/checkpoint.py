"""
Weight checkpoint I/O

Layout (little-endian): magic ``CGV1``, uint32 tensor count, then per tensor
uint32 name length, UTF-8 name, uint32 rank, uint32 dims, float32 values.
"""

import logging
import os
import struct
from typing import Dict

import numpy as np

from src.utils.errors import DataFormatError

logger = logging.getLogger(__name__)

MAGIC = b"CGV1"


def save_checkpoint(tensors: Dict[str, np.ndarray], path: str):
    """Write named arrays to ``path`` in the CGV1 format"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(tensors)))
        for name, value in tensors.items():
            array = np.asarray(value, dtype="<f4")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", array.ndim))
            if array.ndim:
                f.write(struct.pack(f"<{array.ndim}I", *array.shape))
            f.write(np.ascontiguousarray(array).tobytes())
    os.replace(tmp_path, path)
    logger.info(f"Checkpoint written: {path} ({len(tensors)} tensors)")


def _read_exact(f, count: int, what: str) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise DataFormatError(f"checkpoint truncated while reading {what}")
    return data


def load_checkpoint(path: str) -> Dict[str, np.ndarray]:
    """Read a CGV1 checkpoint into an ordered name -> float32 array dict"""
    tensors: Dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise DataFormatError(f"bad checkpoint magic {magic!r} in {path}")
        (count,) = struct.unpack("<I", _read_exact(f, 4, "tensor count"))
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4, "name length"))
            name = _read_exact(f, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(f, 4, "rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, "dims")) if rank else ()
            n_values = int(np.prod(dims)) if rank else 1
            raw = _read_exact(f, 4 * n_values, f"values of {name}")
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
        if f.read(1):
            raise DataFormatError(f"trailing bytes after {count} tensors in {path}")
    logger.debug(f"Checkpoint loaded: {path} ({len(tensors)} tensors)")
    return tensors
