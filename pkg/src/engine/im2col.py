"""
im2col / col2im patch extraction as a tape operation
"""

from typing import Tuple

import numpy as np

from src.engine.tensor import Tensor, as_tensor, record
from src.utils.errors import ConfigurationError, ShapeError


def output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    """Spatial output size of a strided window (floor convention)"""
    if kernel < 1 or stride < 1 or padding < 0:
        raise ConfigurationError(f"invalid window geometry: kernel={kernel} stride={stride} padding={padding}")
    out = (size + 2 * padding - kernel) // stride + 1
    if out < 1:
        raise ConfigurationError(
            f"window kernel={kernel} stride={stride} padding={padding} does not fit input size {size}"
        )
    return out


def im2col_array(x: np.ndarray, kh: int, kw: int, stride: int = 1, pad: int = 0) -> np.ndarray:
    n, c, h, w = x.shape
    out_h = output_size(h, kh, stride, pad)
    out_w = output_size(w, kw, stride, pad)
    img = np.pad(x, [(0, 0), (0, 0), (pad, pad), (pad, pad)], "constant")
    col = np.zeros((n, c, kh, kw, out_h, out_w), dtype=x.dtype)
    for y in range(kh):
        y_max = y + stride * out_h
        for xx in range(kw):
            x_max = xx + stride * out_w
            col[:, :, y, xx, :, :] = img[:, :, y:y_max:stride, xx:x_max:stride]
    # (N, C, kh, kw, oh, ow) -> (N*oh*ow, C*kh*kw)
    return col.transpose(0, 4, 5, 1, 2, 3).reshape(n * out_h * out_w, -1)


def col2im_array(
    col: np.ndarray, input_shape: Tuple[int, int, int, int], kh: int, kw: int, stride: int = 1, pad: int = 0
) -> np.ndarray:
    n, c, h, w = input_shape
    out_h = output_size(h, kh, stride, pad)
    out_w = output_size(w, kw, stride, pad)
    col = col.reshape(n, out_h, out_w, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((n, c, h + 2 * pad + stride - 1, w + 2 * pad + stride - 1), dtype=col.dtype)
    for y in range(kh):
        y_max = y + stride * out_h
        for xx in range(kw):
            x_max = xx + stride * out_w
            img[:, :, y:y_max:stride, xx:x_max:stride] += col[:, :, y, xx, :, :]
    return img[:, :, pad : h + pad, pad : w + pad]


def im2col(x: Tensor, kh: int, kw: int, stride: int = 1, pad: int = 0) -> Tensor:
    """Unfold B×C×H×W into (B·H'·W')×(C·kh·kw) patches; backward folds with col2im"""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"im2col expects a 4-D input, got {x.shape}")
    shape = x.shape

    def _backward(g):
        return (col2im_array(g, shape, kh, kw, stride, pad),)

    return record("im2col", im2col_array(x.data, kh, kw, stride, pad), (x,), _backward)
