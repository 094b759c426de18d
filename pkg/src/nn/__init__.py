from src.nn.module import Module, he_normal
from src.nn.layers import (
    BatchNorm2dState,
    Conv2dParams,
    LinearParams,
    batchnorm2d,
    conv2d,
    cross_entropy,
    global_average_pool,
    linear,
)

__all__ = [
    "BatchNorm2dState",
    "Conv2dParams",
    "LinearParams",
    "Module",
    "batchnorm2d",
    "conv2d",
    "cross_entropy",
    "global_average_pool",
    "he_normal",
    "linear",
]
