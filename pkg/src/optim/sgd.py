"""
SGD with classic momentum, folded weight decay and a cosine-annealed learning rate
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from src.engine.tensor import Parameter
from src.utils.errors import ConfigurationError, GradientError

logger = logging.getLogger(__name__)


@dataclass
class SgdState:
    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    total_epochs: int = 160
    lr: float = field(default=-1.0)
    velocity: Dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ConfigurationError(f"lr0 must be > 0, got {self.lr0}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.lr <= 0:
            self.lr = self.lr0


def sgd_step(params: Sequence[Parameter], state: SgdState, skip_missing: bool = False):
    """v <- mu·v + (g + wd·p); p <- p - lr·v

    Weight decay is applied only to parameters flagged with ``decay``. Frozen
    parameters (requires_grad False) are skipped; a learnable parameter without
    a gradient is an error unless ``skip_missing`` (gates pinned by force_gate
    leave the routing parameters off the loss path).
    """
    for p in params:
        if not p.requires_grad:
            continue
        if p.grad is None:
            if skip_missing:
                continue
            raise GradientError(f"missing gradient for learnable parameter {p.name or p.shape}")
        g = p.grad
        if state.weight_decay and getattr(p, "decay", True):
            g = g + state.weight_decay * p.data
        key = id(p)
        v = state.velocity.get(key)
        v = g.copy() if v is None else state.momentum * v + g
        if v.shape != p.data.shape:
            raise GradientError(f"velocity shape {v.shape} does not match parameter {p.shape}")
        state.velocity[key] = v
        p.data = (p.data - state.lr * v).astype(p.data.dtype)


def cosine_anneal_lr(epoch: int, total_epochs: int, lr0: float) -> float:
    """lr0 · ½(1 + cos(π·epoch/total_epochs))"""
    if total_epochs <= 0 or not 0 <= epoch <= total_epochs:
        raise ConfigurationError(f"epoch {epoch} outside [0, {total_epochs}]")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))


def apply_schedule(state: SgdState, epoch: int) -> float:
    state.lr = cosine_anneal_lr(epoch, state.total_epochs, state.lr0)
    logger.debug(f"Learning rate for epoch {epoch}: {state.lr:.6f}")
    return state.lr
