"""
Convolution, batch normalization, linear, pooling and cross-entropy
"""

import logging
from typing import Optional, Tuple

import numpy as np

from src.engine.im2col import im2col, output_size
from src.engine.tensor import Parameter, Tensor, as_tensor, matmul, record, reduce, reshape, transpose
from src.nn.module import Module, he_normal
from src.utils.errors import ConfigurationError, DomainError, ShapeError

logger = logging.getLogger(__name__)

BN_MOMENTUM = 0.1
BN_EPSILON = 1e-5


class Conv2dParams(Module):
    """Weights of a square-kernel 2-D convolution (cross-correlation, zero padding)"""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        stride: int = 1,
        padding: int = 0,
        bias: bool = False,
        rng: Optional[np.random.Generator] = None,
    ):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        if kernel_size < 1 or stride < 1 or padding < 0:
            raise ConfigurationError(f"invalid conv geometry: kernel={kernel_size} stride={stride} padding={padding}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = self.register_parameter(
            "weight", Parameter(he_normal(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in))
        )
        self.bias = self.register_parameter("bias", Parameter(np.zeros(out_channels), decay=False)) if bias else None

    def output_hw(self, height: int, width: int) -> Tuple[int, int]:
        """Spatial output size for an input of ``height``×``width``; raises ConfigurationError if it does not fit"""
        return (
            output_size(height, self.kernel_size, self.stride, self.padding),
            output_size(width, self.kernel_size, self.stride, self.padding),
        )

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self)


def conv2d(x: Tensor, p: Conv2dParams) -> Tensor:
    """B×Cin×H×W -> B×Cout×H'×W' via im2col + matmul"""
    x = as_tensor(x)
    if x.ndim != 4 or x.shape[1] != p.in_channels:
        raise ShapeError(f"conv2d: input {x.shape} does not match weight {p.weight.shape}")
    batch, _, height, width = x.shape
    out_h, out_w = p.output_hw(height, width)
    k = p.kernel_size

    cols = im2col(x, k, k, p.stride, p.padding)
    w_mat = transpose(reshape(p.weight, (p.out_channels, -1)), (1, 0))
    out = matmul(cols, w_mat)
    if p.bias is not None:
        out = out + reshape(p.bias, (1, p.out_channels))
    out = reshape(out, (batch, out_h, out_w, p.out_channels))
    return transpose(out, (0, 3, 1, 2))


class BatchNorm2dState(Module):
    """Per-channel affine parameters and running statistics"""

    def __init__(self, channels: int, momentum: float = BN_MOMENTUM, eps: float = BN_EPSILON):
        super().__init__()
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = self.register_parameter("gamma", Parameter(np.ones(channels), decay=False))
        self.beta = self.register_parameter("beta", Parameter(np.zeros(channels), decay=False))
        self.register_buffer("running_mean", np.zeros(channels))
        self.register_buffer("running_var", np.ones(channels))

    @property
    def running_mean(self) -> np.ndarray:
        return self._buffers["running_mean"]

    @property
    def running_var(self) -> np.ndarray:
        return self._buffers["running_var"]

    @property
    def mode(self) -> str:
        return "train" if self.training else "eval"

    def forward(self, x: Tensor) -> Tensor:
        return batchnorm2d(x, self)


def batchnorm2d(x: Tensor, s: BatchNorm2dState) -> Tensor:
    """Train mode: batch statistics + EMA update of running stats. Eval mode: running stats only."""
    x = as_tensor(x)
    if x.ndim != 4 or x.shape[1] != s.channels:
        raise ShapeError(f"batchnorm2d: input {x.shape} does not have {s.channels} channels")
    c = s.channels
    if s.training:
        mean = reduce(x, (0, 2, 3), "mean", keepdims=True)
        centered = x - mean
        var = reduce(centered.square(), (0, 2, 3), "mean", keepdims=True)
        normalized = centered / (var + s.eps).sqrt()

        n = x.size // c
        batch_var = var.data.reshape(c)
        # running variance uses the unbiased estimate
        unbiased = batch_var * n / (n - 1) if n > 1 else batch_var
        s._buffers["running_mean"] = (1 - s.momentum) * s.running_mean + s.momentum * mean.data.reshape(c)
        s._buffers["running_var"] = (1 - s.momentum) * s.running_var + s.momentum * unbiased
    else:
        mean = s.running_mean.reshape(1, c, 1, 1)
        inv_std = 1.0 / np.sqrt(s.running_var.reshape(1, c, 1, 1) + s.eps)
        normalized = (x - mean) * inv_std
    return normalized * reshape(s.gamma, (1, c, 1, 1)) + reshape(s.beta, (1, c, 1, 1))


class LinearParams(Module):
    def __init__(self, in_features: int, out_features: int, rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = self.register_parameter(
            "weight", Parameter(he_normal(rng, (out_features, in_features), in_features))
        )
        self.bias = self.register_parameter("bias", Parameter(np.zeros(out_features), decay=False))

    def forward(self, x: Tensor) -> Tensor:
        return linear(x, self)


def linear(x: Tensor, p: LinearParams) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] != p.in_features:
        raise ShapeError(f"linear: input {x.shape} does not match weight {p.weight.shape}")
    return matmul(x, transpose(p.weight, (1, 0))) + reshape(p.bias, (1, p.out_features))


def global_average_pool(x: Tensor) -> Tensor:
    """Spatial mean per channel: B×C×H×W -> B×C"""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"global_average_pool expects B×C×H×W, got {x.shape}")
    return reduce(x, (2, 3), "mean")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Batch mean of -log softmax(logits)[label] with log-sum-exp stabilization"""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    batch, classes = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise DomainError(f"labels must lie in [0, {classes}), got range [{labels.min()}, {labels.max()}]")

    z = logits.data
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.arange(batch)
    loss = -log_probs[rows, labels].mean()

    def _backward(g):
        grad = np.exp(log_probs)
        grad[rows, labels] -= 1.0
        return (grad * (g / batch),)

    return record("cross_entropy", np.asarray(loss), (logits,), _backward)
