"""
Gumbel noise sources for relaxed routing
"""

from typing import Dict, Optional, Tuple, Union

import numpy as np

from src.engine.tensor import Tensor

U_MIN = 1e-12


def block_rng(seed: int, block_index: int, step: int) -> np.random.Generator:
    """Independent stream for one block at one training step"""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(block_index), int(step)]))


def gumbel_from_uniform(u: np.ndarray, u_min: float = U_MIN) -> np.ndarray:
    u = np.clip(np.asarray(u, dtype=np.float64), u_min, 1.0 - u_min)
    return -np.log(-np.log(u))


def gumbel_sample(shape: Union[int, Tuple[int, ...]], rng: np.random.Generator) -> Tensor:
    """I.i.d. standard Gumbel draws, g = -log(-log u) with u clamped to (1e-12, 1 - 1e-12)"""
    return Tensor(gumbel_from_uniform(rng.random(shape)))


class NoiseSource:
    """Supplies the (B, 2) identity/residual noise pair for one block at one step"""

    def sample(self, batch: int, block_index: int, step: int) -> np.ndarray:
        raise NotImplementedError


class GumbelNoise(NoiseSource):
    def __init__(self, seed: int):
        self.seed = seed

    def sample(self, batch, block_index, step):
        return gumbel_sample((batch, 2), block_rng(self.seed, block_index, step)).data


class FrozenNoise(NoiseSource):
    """Fixed draws: one array shared by all blocks, or a dict keyed by block index"""

    def __init__(self, values: Union[np.ndarray, Dict[int, np.ndarray]]):
        self.values = values

    def sample(self, batch, block_index, step):
        values = self.values[block_index] if isinstance(self.values, dict) else self.values
        values = np.asarray(values)
        if values.shape != (batch, 2):
            raise ValueError(f"frozen noise has shape {values.shape}, expected {(batch, 2)}")
        return values


class ZeroNoise(NoiseSource):
    def sample(self, batch, block_index, step):
        return np.zeros((batch, 2))


def resolve_noise(noise: Optional[NoiseSource], seed: int) -> NoiseSource:
    return noise if noise is not None else GumbelNoise(seed)
