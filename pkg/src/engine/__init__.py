from src.engine.tensor import (
    GradientTape,
    Operation,
    Parameter,
    Tensor,
    add,
    anomaly_mode,
    as_tensor,
    backward,
    clamp_min,
    concat,
    current_tape,
    div,
    get_default_dtype,
    map_elementwise,
    matmul,
    mul,
    no_grad,
    ones,
    precision,
    record,
    reduce,
    reshape,
    set_anomaly_detection,
    set_default_dtype,
    sub,
    transpose,
    zeros,
)
from src.engine.gradcheck import finite_difference_check
from src.engine.checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "GradientTape",
    "Operation",
    "Parameter",
    "Tensor",
    "add",
    "anomaly_mode",
    "as_tensor",
    "backward",
    "clamp_min",
    "concat",
    "current_tape",
    "div",
    "finite_difference_check",
    "get_default_dtype",
    "load_checkpoint",
    "map_elementwise",
    "matmul",
    "mul",
    "no_grad",
    "ones",
    "precision",
    "record",
    "reduce",
    "reshape",
    "save_checkpoint",
    "set_anomaly_detection",
    "set_default_dtype",
    "sub",
    "transpose",
    "zeros",
]
