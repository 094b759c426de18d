from src.data.augment import (
    AUGMENT_PRESETS,
    AugmentConfig,
    augment_and_normalize,
    augment_config_for,
    denormalize,
    horizontal_flip,
    normalize,
    random_crop,
)
from src.data.datasets import (
    Dataset,
    batch_indices,
    batch_iterator,
    load_cifar10_bin,
    load_dataset,
    load_mnist_idx,
)

__all__ = [
    "AUGMENT_PRESETS",
    "AugmentConfig",
    "Dataset",
    "augment_and_normalize",
    "augment_config_for",
    "batch_indices",
    "batch_iterator",
    "denormalize",
    "horizontal_flip",
    "load_cifar10_bin",
    "load_dataset",
    "load_mnist_idx",
    "normalize",
    "random_crop",
]
