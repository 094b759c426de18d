"""
Gated residual networks

Blocks are post-activation basic blocks (conv3×3-BN-ReLU-conv3×3-BN). The
gate scales the residual before the addition and the ReLU is applied after
it. Stage transitions project the identity with a 1×1 stride-2 conv + BN, and
CIR is measured between the projected identity and the residual.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.engine.checkpoint import load_checkpoint, save_checkpoint
from src.engine.tensor import Parameter, Tensor, as_tensor, no_grad, reshape
from src.gating.gate import (
    ControllerParams,
    GateConfig,
    GateDecision,
    controller_hidden_width,
    decide,
    make_gamma,
)
from src.gating.noise import NoiseSource, resolve_noise
from src.nn.layers import BatchNorm2dState, Conv2dParams, LinearParams, global_average_pool, linear
from src.nn.module import Module
from src.utils.errors import ConfigurationError, ShapeError

logger = logging.getLogger(__name__)

TRAIN = "train"
EVAL = "eval"


class ResidualTransform(Module):
    """F(x) = BN(conv(ReLU(BN(conv(x)))))"""

    def __init__(self, in_channels: int, out_channels: int, stride: int, rng: np.random.Generator):
        super().__init__()
        self.conv1 = self.add_module("conv1", Conv2dParams(in_channels, out_channels, 3, stride, 1, rng=rng))
        self.bn1 = self.add_module("bn1", BatchNorm2dState(out_channels))
        self.conv2 = self.add_module("conv2", Conv2dParams(out_channels, out_channels, 3, 1, 1, rng=rng))
        self.bn2 = self.add_module("bn2", BatchNorm2dState(out_channels))

    def forward(self, x: Tensor) -> Tensor:
        return self.bn2(self.conv2(self.bn1(self.conv1(x)).relu()))


class Projection(Module):
    def __init__(self, in_channels: int, out_channels: int, stride: int, rng: np.random.Generator):
        super().__init__()
        self.conv = self.add_module("conv", Conv2dParams(in_channels, out_channels, 1, stride, 0, rng=rng))
        self.bn = self.add_module("bn", BatchNorm2dState(out_channels))

    def forward(self, x: Tensor) -> Tensor:
        return self.bn(self.conv(x))


class GateParams(Module):
    def __init__(self, cfg: GateConfig):
        super().__init__()
        self.gamma = self.register_parameter("gamma", make_gamma(cfg))


class GatedBlock(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        stride: int,
        gate_cfg: GateConfig,
        rng: np.random.Generator,
        index: int = 0,
    ):
        super().__init__()
        self.index = index
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = stride
        self.residual = self.add_module("residual", ResidualTransform(in_channels, out_channels, stride, rng))
        self.projection: Optional[Projection] = None
        if stride != 1 or in_channels != out_channels:
            self.projection = self.add_module("projection", Projection(in_channels, out_channels, stride, rng))
        hidden = controller_hidden_width(in_channels, gate_cfg.controller_reduction, gate_cfg.controller_min_hidden)
        self.controller = self.add_module("controller", ControllerParams(in_channels, hidden, rng=rng))
        self.gate = self.add_module("gate", GateParams(gate_cfg))

    @property
    def gamma(self) -> Parameter:
        return self.gate.gamma

    def identity(self, x: Tensor) -> Tensor:
        return self.projection(x) if self.projection is not None else x

    def output_hw(self, height: int, width: int) -> Tuple[int, int]:
        h, w = self.residual.conv1.output_hw(height, width)
        h, w = self.residual.conv2.output_hw(h, w)
        if self.projection is not None and self.projection.conv.output_hw(height, width) != (h, w):
            raise ConfigurationError(
                f"block {self.index}: projection and residual disagree for input {height}×{width}"
            )
        return h, w

    def block_parameter_count(self) -> int:
        """Parameters of the residual path and projection, excluding the gate"""
        count = self.residual.parameter_count()
        if self.projection is not None:
            count += self.projection.parameter_count()
        return count


def _forced(value: float, batch: int) -> Tensor:
    return Tensor(np.full(batch, float(value)))


def _paths(x: Tensor, block: GatedBlock) -> Tuple[Tensor, Tensor]:
    identity = block.identity(x)
    residual = block.residual(x)
    if identity.shape != residual.shape:
        raise ShapeError(f"block {block.index}: identity path {identity.shape} != residual path {residual.shape}")
    return identity, residual


def gated_block_forward_train(
    x: Tensor,
    block: GatedBlock,
    cfg: GateConfig,
    noise: np.ndarray,
    tau: Optional[float] = None,
    force_gate: Optional[float] = None,
) -> Tuple[Tensor, GateDecision, Tensor]:
    """y = identity + z·F(x) with the relaxed gate z; also returns full = identity + F(x)"""
    if not block.training:
        raise ConfigurationError(f"block {block.index} is in eval mode; training forward needs train mode")
    x = as_tensor(x)
    identity, residual = _paths(x, block)
    decision = decide(identity, residual, x, block.controller, block.gamma, cfg, noise, tau, block.index)
    if force_gate is not None:
        decision.relaxed = _forced(force_gate, x.shape[0])
    z = reshape(decision.relaxed, (x.shape[0], 1, 1, 1))
    y = identity + z * residual
    full = identity + residual
    return y, decision, full


def gated_block_forward_eval(
    x: Tensor, block: GatedBlock, cfg: GateConfig, force_gate: Optional[float] = None
) -> Tuple[Tensor, GateDecision]:
    """y = identity + ĝ·F(x) with the deterministic hard gate; consumes no noise"""
    if block.training:
        raise ConfigurationError(f"block {block.index} is in train mode; inference forward needs eval mode")
    with no_grad():
        x = as_tensor(x)
        identity, residual = _paths(x, block)
        decision = decide(identity, residual, x, block.controller, block.gamma, cfg, None, None, block.index)
        if force_gate is not None:
            decision.hard = np.full(x.shape[0], float(force_gate))
        g = Tensor(decision.hard.reshape(x.shape[0], 1, 1, 1))
        y = identity + g * residual
    return y, decision


@dataclass
class ForwardOutput:
    logits: Tensor
    decisions: List[GateDecision]
    full_outputs: List[Tensor] = field(default_factory=list)
    gated_outputs: List[Tensor] = field(default_factory=list)


class GatedNetwork(Module):
    """Stem conv, stages of gated blocks, GAP + linear head"""

    def __init__(
        self,
        in_channels: int,
        stage_widths: Sequence[int],
        blocks_per_stage: int,
        num_classes: int,
        input_hw: Tuple[int, int],
        gate_cfg: Optional[GateConfig] = None,
        seed: int = 0,
        topology: str = "custom",
    ):
        super().__init__()
        self.gate_cfg = (gate_cfg or GateConfig()).validate()
        self.topology = topology
        self.in_channels = in_channels
        self.input_hw = tuple(input_hw)
        self.num_classes = num_classes
        rng = np.random.default_rng(seed)

        width = stage_widths[0]
        self.stem = self.add_module("stem", Conv2dParams(in_channels, width, 3, 1, 1, rng=rng))
        self.stem_bn = self.add_module("stem_bn", BatchNorm2dState(width))
        h, w = self.stem.output_hw(*self.input_hw)

        self.blocks: List[GatedBlock] = []
        in_ch = width
        for stage, out_ch in enumerate(stage_widths):
            for b in range(blocks_per_stage):
                stride = 2 if stage > 0 and b == 0 else 1
                index = len(self.blocks)
                block = GatedBlock(in_ch, out_ch, stride, self.gate_cfg, rng, index)
                h, w = block.output_hw(h, w)
                self.blocks.append(self.add_module(f"block{index}", block))
                in_ch = out_ch
        self.head = self.add_module("head", LinearParams(in_ch, num_classes, rng=rng))
        self.final_hw = (h, w)
        logger.info(
            f"Built {topology} network: {len(self.blocks)} gated blocks, {self.parameter_count()} parameters, "
            f"final feature map {in_ch}×{h}×{w}"
        )

    @property
    def mode(self) -> str:
        return TRAIN if self.training else EVAL

    def set_mode(self, mode: str):
        if mode not in (TRAIN, EVAL):
            raise ConfigurationError(f"mode must be '{TRAIN}' or '{EVAL}', got {mode!r}")
        self.train(mode == TRAIN)

    def check_input(self, x: Tensor):
        expected = (self.in_channels,) + self.input_hw
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ShapeError(f"{self.topology} network expects B×{'×'.join(map(str, expected))}, got {x.shape}")

    def stem_forward(self, x: Tensor) -> Tensor:
        return self.stem_bn(self.stem(x)).relu()

    def head_forward(self, h: Tensor) -> Tensor:
        return linear(global_average_pool(h), self.head)

    def save(self, path: str):
        save_checkpoint(self.state_dict(), path)

    def load(self, path: str):
        self.load_state_dict(load_checkpoint(path))


def network_forward(
    net: GatedNetwork,
    x,
    mode: str = TRAIN,
    noise: Optional[NoiseSource] = None,
    step: int = 0,
    tau: Optional[float] = None,
    force_gate: Optional[float] = None,
) -> ForwardOutput:
    """Apply the stem, every gated block in order, and the head"""
    net.set_mode(mode)
    x = as_tensor(x)
    net.check_input(x)
    batch = x.shape[0]
    cfg = net.gate_cfg

    if mode == EVAL:
        with no_grad():
            h = net.stem_forward(x)
            decisions = []
            for block in net.blocks:
                y, decision = gated_block_forward_eval(h, block, cfg, force_gate)
                decisions.append(decision)
                h = y.relu()
            return ForwardOutput(logits=net.head_forward(h), decisions=decisions)

    source = resolve_noise(noise, cfg.rng_seed)
    out = ForwardOutput(logits=None, decisions=[])
    h = net.stem_forward(x)
    for block in net.blocks:
        y, decision, full = gated_block_forward_train(
            h, block, cfg, source.sample(batch, block.index, step), tau, force_gate
        )
        out.decisions.append(decision)
        out.full_outputs.append(full)
        out.gated_outputs.append(y)
        h = y.relu()
    out.logits = net.head_forward(h)
    return out


def plain_forward(net: GatedNetwork, x) -> Tensor:
    """Ungated residual forward (y = identity + F(x)) on the same weights, in the network's current mode"""
    x = as_tensor(x)
    net.check_input(x)
    h = net.stem_forward(x)
    for block in net.blocks:
        identity, residual = _paths(h, block)
        h = (identity + residual).relu()
    return net.head_forward(h)


def build_cifar_network(seed: int = 0, gate_cfg: Optional[GateConfig] = None) -> GatedNetwork:
    """ResNet-20 topology: 3 stages × 3 gated blocks, widths 16/32/64, 3×32×32 input"""
    return GatedNetwork(3, (16, 32, 64), 3, 10, (32, 32), gate_cfg, seed, topology="cifar10")


def build_mnist_network(seed: int = 0, gate_cfg: Optional[GateConfig] = None) -> GatedNetwork:
    """Reduced topology for 1×28×28 input: 2 stages × 2 gated blocks, widths 16/32"""
    return GatedNetwork(1, (16, 32), 2, 10, (28, 28), gate_cfg, seed, topology="mnist")


BUILDERS = {
    "cifar10": build_cifar_network,
    "mnist": build_mnist_network,
}


def build_network(dataset: str, seed: int = 0, gate_cfg: Optional[GateConfig] = None) -> GatedNetwork:
    if dataset not in BUILDERS:
        raise ConfigurationError(f"Unknown dataset '{dataset}'. Valid options: {sorted(BUILDERS)}")
    return BUILDERS[dataset](seed, gate_cfg)
