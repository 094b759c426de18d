from src.losses.objective import (
    LossBreakdown,
    compute_objective,
    consistency_loss,
    flops_loss,
    mean_gate,
    per_block_gate_means,
    prog_schedule,
    skip_percentage,
    total_loss,
)

__all__ = [
    "LossBreakdown",
    "compute_objective",
    "consistency_loss",
    "flops_loss",
    "mean_gate",
    "per_block_gate_means",
    "prog_schedule",
    "skip_percentage",
    "total_loss",
]
