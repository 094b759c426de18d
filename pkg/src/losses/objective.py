"""
Training objective: cross-entropy + consistency + progressive FLOPs hinge
"""

import logging
from dataclasses import asdict, dataclass
from typing import List, Sequence, Tuple

import numpy as np

from src.engine.tensor import Tensor, as_tensor, clamp_min, concat, reduce, reshape
from src.gating.gate import GateDecision
from src.nn.layers import cross_entropy
from src.utils.errors import ConfigurationError, ShapeError

logger = logging.getLogger(__name__)

NORM_EPSILON = 1e-8


@dataclass
class LossBreakdown:
    ce: float
    cons: float
    flops: float
    total: float
    mean_gate: float
    prog: float

    def to_dict(self):
        return asdict(self)


def _unit_rows(t: Tensor, eps: float) -> Tensor:
    batch = t.shape[0]
    flat = reshape(t, (batch, -1))
    return flat / clamp_min(reduce(flat, 1, "l2norm", keepdims=True), eps)


def consistency_loss(
    full_outputs: Sequence[Tensor], gated_outputs: Sequence[Tensor], eps: float = NORM_EPSILON
) -> Tensor:
    """Sum over blocks of the batch-mean squared distance between ℓ2-normalized full and gated outputs"""
    if len(full_outputs) != len(gated_outputs):
        raise ShapeError(f"consistency loss: {len(full_outputs)} full outputs vs {len(gated_outputs)} gated outputs")
    total = Tensor(0.0)
    for i, (full, gated) in enumerate(zip(full_outputs, gated_outputs)):
        full, gated = as_tensor(full), as_tensor(gated)
        if full.shape != gated.shape:
            raise ShapeError(f"consistency loss block {i}: {full.shape} vs {gated.shape}")
        diff = _unit_rows(full, eps) - _unit_rows(gated, eps)
        total = total + reduce(reduce(diff.square(), 1, "sum"), 0, "mean")
    return total


def _gate_tensor(decision: GateDecision) -> Tensor:
    return decision.relaxed if decision.relaxed is not None else Tensor(decision.hard)


def mean_gate(decisions: Sequence[GateDecision]) -> Tensor:
    """Mean gate activation over all blocks and all samples (differentiable in train mode)"""
    if not decisions:
        raise ShapeError("mean_gate needs at least one gate decision")
    return reduce(concat([_gate_tensor(d) for d in decisions], axis=0), None, "mean")


def skip_percentage(g_bar: float) -> float:
    return (1.0 - float(g_bar)) * 100.0


def prog_schedule(t: float, warmup: float) -> float:
    """min(1, t / warmup), t in completed epochs"""
    if t < 0:
        raise ConfigurationError(f"epoch index must be >= 0, got {t}")
    if not warmup > 0:
        raise ConfigurationError(f"warmup must be > 0, got {warmup}")
    return min(1.0, t / warmup)


def flops_loss(g_bar: Tensor, tau_target: float, prog: float) -> Tensor:
    """prog · max(0, ḡ - τ_target)²"""
    if not 0.0 < tau_target <= 1.0:
        raise ConfigurationError(f"tau_target must lie in (0, 1], got {tau_target}")
    return prog * (as_tensor(g_bar) - tau_target).relu().square()


def total_loss(ce: Tensor, cons: Tensor, flops: Tensor, lambda_cons: float, lambda_flops: float) -> Tensor:
    return ce + lambda_cons * as_tensor(cons) + lambda_flops * as_tensor(flops)


def compute_objective(
    output,
    labels: np.ndarray,
    lambda_cons: float,
    lambda_flops: float,
    tau_target: float,
    prog: float,
) -> Tuple[Tensor, LossBreakdown]:
    """Assemble the three-term loss for one forward output"""
    ce = cross_entropy(output.logits, labels)
    cons = consistency_loss(output.full_outputs, output.gated_outputs)
    g_bar = mean_gate(output.decisions)
    flops = flops_loss(g_bar, tau_target, prog)
    total = total_loss(ce, cons, flops, lambda_cons, lambda_flops)
    breakdown = LossBreakdown(
        ce=ce.item(),
        cons=cons.item(),
        flops=flops.item(),
        total=total.item(),
        mean_gate=g_bar.item(),
        prog=float(prog),
    )
    return total, breakdown


def per_block_gate_means(decisions: List[GateDecision]) -> List[float]:
    return [float(np.mean(d.gate_values)) for d in decisions]
