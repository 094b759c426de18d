"""
Cosine-incompatibility gating

A block's gate logit is gamma * (CIR(x, F(x)) + c(x)), where CIR = 1 - cos
between the flattened identity and residual, and c is a small controller over
pooled features. Training uses a two-class Gumbel-Softmax relaxation with the
identity logit fixed at 0; inference thresholds sigmoid(logit).
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Union

import numpy as np

from src.engine.tensor import Parameter, Tensor, as_tensor, clamp_min, record, reduce, reshape
from src.nn.layers import LinearParams, global_average_pool, linear
from src.nn.module import Module
from src.utils.errors import ConfigurationError, ShapeError

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.45
DEFAULT_EPSILON = 1e-8


@dataclass
class GateConfig:
    gamma: float = -2.5
    learnable_gamma: bool = True
    temperature: float = 1.0
    temperature_final: Optional[float] = None
    inference_threshold: float = DEFAULT_THRESHOLD
    epsilon_norm: float = DEFAULT_EPSILON
    rng_seed: int = 0
    controller_reduction: int = 16
    controller_min_hidden: int = 2

    def validate(self) -> "GateConfig":
        if not self.temperature > 0:
            raise ConfigurationError(f"temperature must be > 0, got {self.temperature}")
        if self.temperature_final is not None and not self.temperature_final > 0:
            raise ConfigurationError(f"temperature_final must be > 0, got {self.temperature_final}")
        if not 0.0 < self.inference_threshold < 1.0:
            raise ConfigurationError(f"inference threshold must lie in (0, 1), got {self.inference_threshold}")
        if not self.epsilon_norm > 0:
            raise ConfigurationError(f"epsilon_norm must be > 0, got {self.epsilon_norm}")
        if self.controller_reduction < 1 or self.controller_min_hidden < 1:
            raise ConfigurationError("controller width settings must be >= 1")
        return self


@dataclass
class GateDecision:
    """Per-sample routing record for one block"""

    cir: Tensor
    controller_out: Tensor
    logit: Tensor
    relaxed: Optional[Tensor]
    hard: np.ndarray
    block_index: int = -1

    @property
    def batch_size(self) -> int:
        return self.cir.shape[0]

    @property
    def gate_values(self) -> np.ndarray:
        """Relaxed gates in train mode, hard gates in eval mode"""
        return self.relaxed.data if self.relaxed is not None else self.hard

    def summary(self) -> Dict[str, float]:
        out = {
            "block": self.block_index,
            "cir_mean": float(self.cir.data.mean()),
            "logit_mean": float(self.logit.data.mean()),
            "hard_open": float(self.hard.mean()),
        }
        if self.relaxed is not None:
            out["z_mean"] = float(self.relaxed.data.mean())
        return out


def controller_hidden_width(channels: int, reduction: int = 16, min_hidden: int = 2) -> int:
    return max(math.ceil(channels / reduction), min_hidden)


class ControllerParams(Module):
    """Two-layer MLP over globally pooled features, c(x) = w2 · ReLU(w1 · GAP(x))"""

    def __init__(self, channels: int, hidden: int, rng: Optional[np.random.Generator] = None):
        super().__init__()
        if hidden < 1:
            raise ConfigurationError(f"controller hidden width must be >= 1, got {hidden}")
        rng = rng or np.random.default_rng(0)
        self.channels = channels
        self.hidden = hidden
        self.w1 = self.add_module("w1", LinearParams(channels, hidden, rng=rng))
        self.w2 = self.add_module("w2", LinearParams(hidden, 1, rng=rng))
        # zero output layer: the initial logit is exactly gamma * CIR
        self.w2.weight.data[...] = 0.0

    def forward(self, x: Tensor) -> Tensor:
        return controller_forward(x, self)


def cosine_similarity_batched(x: Tensor, r: Tensor, eps: float = DEFAULT_EPSILON) -> Tensor:
    """Per-sample cosine between flattened ``x`` and ``r``; 0 when either norm is below ``eps``"""
    x, r = as_tensor(x), as_tensor(r)
    if x.shape != r.shape:
        raise ShapeError(f"cosine similarity needs identical shapes, got {x.shape} and {r.shape}")
    batch = x.shape[0]
    u = reshape(x, (batch, -1))
    v = reshape(r, (batch, -1))
    dot = reduce(u * v, 1, "sum")
    norm_u = reduce(u, 1, "l2norm")
    norm_v = reduce(v, 1, "l2norm")
    valid = ((norm_u.data >= eps) & (norm_v.data >= eps)).astype(dot.dtype)
    cos = dot / (clamp_min(norm_u, eps) * clamp_min(norm_v, eps)) * valid
    # clipping only absorbs rounding past ±1, so the gradient passes straight through
    return record("clip_unit", np.clip(cos.data, -1.0, 1.0), (cos,), lambda g: (g,))


def cir(x: Tensor, r: Tensor, eps: float = DEFAULT_EPSILON) -> Tensor:
    """Cosine Incompatibility Ratio, 1 - cos(x, r), in [0, 2]"""
    return 1.0 - cosine_similarity_batched(x, r, eps)


def controller_forward(x: Tensor, p: ControllerParams) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 4 or x.shape[1] != p.channels:
        raise ShapeError(f"controller expects {p.channels} channels, got input {x.shape}")
    hidden = linear(global_average_pool(x), p.w1).relu()
    return reshape(linear(hidden, p.w2), (x.shape[0],))


def gate_logit(cir_val: Tensor, ctrl: Tensor, gamma: Union[float, Tensor]) -> Tensor:
    """Residual-class logit gamma * (CIR + c); the identity-class logit is fixed at 0"""
    return gamma * (as_tensor(cir_val) + ctrl)


def relaxed_gate(logit_residual: Tensor, noise, tau: float, formulation: str = "sigmoid") -> Tensor:
    """Residual coordinate of softmax([0 + g0, logit + g1] / tau)

    ``formulation="sigmoid"`` evaluates the algebraically equal
    sigmoid((logit + g1 - g0) / tau).
    """
    if not tau > 0:
        raise ConfigurationError(f"temperature must be > 0, got {tau}")
    logit_residual = as_tensor(logit_residual)
    noise = np.asarray(noise.data if isinstance(noise, Tensor) else noise, dtype=logit_residual.dtype)
    if noise.shape != (logit_residual.shape[0], 2):
        raise ShapeError(f"noise must have shape {(logit_residual.shape[0], 2)}, got {noise.shape}")
    g0, g1 = noise[:, 0], noise[:, 1]

    if formulation == "sigmoid":
        return ((logit_residual + (g1 - g0)) / tau).sigmoid()
    if formulation == "softmax":
        a0 = g0 / tau
        a1 = (logit_residual + g1) / tau
        shift = np.maximum(a0, a1.data)
        e0 = np.exp(a0 - shift)
        e1 = (a1 - shift).exp()
        return e1 / (e1 + e0)
    raise ValueError(f"Unknown relaxation formulation '{formulation}'")


def threshold_logit(delta: float) -> float:
    return math.log(delta / (1.0 - delta))


def hard_gate(logit_residual: Tensor, delta: float = DEFAULT_THRESHOLD) -> Tensor:
    """Deterministic gate: 1 iff sigmoid(logit) > delta (strict)

    Evaluated as logit > logit(delta); sigmoid is strictly increasing, and the
    comparison in logit space has no rounding at the boundary.
    """
    if not 0.0 < delta < 1.0:
        raise ConfigurationError(f"threshold must lie in (0, 1), got {delta}")
    values = as_tensor(logit_residual).data
    return Tensor((values > threshold_logit(delta)).astype(np.float64))


def temperature_at(cfg: GateConfig, epoch: int, total_epochs: int) -> float:
    """Constant tau, or a linear anneal to ``temperature_final`` over training"""
    if cfg.temperature_final is None or total_epochs <= 1:
        return cfg.temperature
    frac = min(max(epoch / (total_epochs - 1), 0.0), 1.0)
    return cfg.temperature + (cfg.temperature_final - cfg.temperature) * frac


def make_gamma(cfg: GateConfig) -> Parameter:
    gamma = Parameter(np.asarray(cfg.gamma), name="gamma", decay=True)
    gamma.requires_grad = cfg.learnable_gamma
    return gamma


def decide(
    identity: Tensor,
    residual: Tensor,
    block_input: Tensor,
    controller: ControllerParams,
    gamma: Union[float, Tensor],
    cfg: GateConfig,
    noise: Optional[np.ndarray] = None,
    tau: Optional[float] = None,
    block_index: int = -1,
) -> GateDecision:
    """Run the full routing computation for one block

    With ``noise`` the relaxed gate is produced (training); without it only
    the hard gate is (inference).
    """
    cir_val = cir(identity, residual, cfg.epsilon_norm)
    ctrl = controller_forward(block_input, controller)
    logit = gate_logit(cir_val, ctrl, gamma)
    relaxed = None
    if noise is not None:
        relaxed = relaxed_gate(logit, noise, cfg.temperature if tau is None else tau)
    hard = hard_gate(logit, cfg.inference_threshold).data
    return GateDecision(
        cir=cir_val, controller_out=ctrl, logit=logit, relaxed=relaxed, hard=hard, block_index=block_index
    )
