"""
Central finite-difference verification of tape gradients
"""

import logging
from typing import Callable

import numpy as np

from src.engine.tensor import GradientTape, Tensor, get_default_dtype, no_grad
from src.utils.errors import PrecisionError

logger = logging.getLogger(__name__)

RELATIVE_FLOOR = 1e-8


def finite_difference_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5) -> float:
    """Compare the tape gradient of scalar ``f`` at ``x`` with central differences

    Returns max_i |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    A NaN anywhere is reported as an infinite error.
    """
    if get_default_dtype() != np.float64:
        raise PrecisionError("finite_difference_check requires 64-bit mode (use precision(np.float64))")

    point = Tensor(x.data, requires_grad=True, name="point")
    with GradientTape() as tape:
        value = f(point)
        tape.backward(value)
    analytic = point.grad if point.grad is not None else np.zeros_like(point.data)
    if not np.isfinite(value.item()) or not np.all(np.isfinite(analytic)):
        logger.warning("Non-finite value or gradient during finite-difference check")
        return float("inf")

    base = np.array(x.data, dtype=np.float64)
    numeric = np.zeros_like(base)
    flat = base.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            upper = f(Tensor(base)).item()
            flat[i] = original - h
            lower = f(Tensor(base)).item()
            flat[i] = original
            numeric.reshape(-1)[i] = (upper - lower) / (2.0 * h)
    if not np.all(np.isfinite(numeric)):
        return float("inf")

    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), RELATIVE_FLOOR)
    error = float(np.max(np.abs(analytic - numeric) / scale)) if analytic.size else 0.0
    logger.debug(f"Finite-difference check over {flat.size} elements: max relative error {error:.3e}")
    return error
