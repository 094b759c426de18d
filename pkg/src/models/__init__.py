from src.models.network import (
    BUILDERS,
    EVAL,
    TRAIN,
    ForwardOutput,
    GatedBlock,
    GatedNetwork,
    build_cifar_network,
    build_mnist_network,
    build_network,
    gated_block_forward_eval,
    gated_block_forward_train,
    network_forward,
    plain_forward,
)

__all__ = [
    "BUILDERS",
    "EVAL",
    "TRAIN",
    "ForwardOutput",
    "GatedBlock",
    "GatedNetwork",
    "build_cifar_network",
    "build_mnist_network",
    "build_network",
    "gated_block_forward_eval",
    "gated_block_forward_train",
    "network_forward",
    "plain_forward",
]
