"""
Training-time augmentation and per-channel normalization
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.utils.errors import ConfigurationError, ShapeError

CIFAR10_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR10_STD = (0.2023, 0.1994, 0.2010)
MNIST_MEAN = (0.1307,)
MNIST_STD = (0.3081,)


@dataclass
class AugmentConfig:
    mean: Tuple[float, ...] = CIFAR10_MEAN
    std: Tuple[float, ...] = CIFAR10_STD
    crop_pad: int = 4
    hflip_prob: float = 0.5

    def validate(self) -> "AugmentConfig":
        if len(self.mean) != len(self.std):
            raise ConfigurationError(f"{len(self.mean)} means but {len(self.std)} stds")
        if any(s <= 0 for s in self.std):
            raise ConfigurationError(f"normalization std must be > 0, got {self.std}")
        if self.crop_pad < 0:
            raise ConfigurationError(f"crop_pad must be >= 0, got {self.crop_pad}")
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ConfigurationError(f"hflip_prob must lie in [0, 1], got {self.hflip_prob}")
        return self


AUGMENT_PRESETS = {
    "cifar10": AugmentConfig(),
    "mnist": AugmentConfig(mean=MNIST_MEAN, std=MNIST_STD, crop_pad=0, hflip_prob=0.0),
}


def augment_config_for(dataset: str) -> AugmentConfig:
    if dataset not in AUGMENT_PRESETS:
        raise ConfigurationError(f"Unknown dataset '{dataset}'. Valid options: {sorted(AUGMENT_PRESETS)}")
    return AUGMENT_PRESETS[dataset]


def _channel_stats(cfg: AugmentConfig, channels: int) -> Tuple[np.ndarray, np.ndarray]:
    if len(cfg.mean) != channels:
        raise ShapeError(f"normalization configured for {len(cfg.mean)} channels, batch has {channels}")
    mean = np.asarray(cfg.mean, dtype=np.float32).reshape(1, -1, 1, 1)
    std = np.asarray(cfg.std, dtype=np.float32).reshape(1, -1, 1, 1)
    return mean, std


def normalize(batch: np.ndarray, cfg: AugmentConfig) -> np.ndarray:
    mean, std = _channel_stats(cfg, batch.shape[1])
    return ((batch - mean) / std).astype(np.float32)


def denormalize(batch: np.ndarray, cfg: AugmentConfig) -> np.ndarray:
    mean, std = _channel_stats(cfg, batch.shape[1])
    return (batch * std + mean).astype(np.float32)


def random_crop(batch: np.ndarray, pad: int, offsets: np.ndarray) -> np.ndarray:
    """Zero-pad by ``pad`` and crop back to the original size at per-sample (dy, dx) offsets"""
    if pad == 0:
        return batch.copy()
    n, _, h, w = batch.shape
    padded = np.pad(batch, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="constant")
    out = np.empty_like(batch)
    for i in range(n):
        dy, dx = int(offsets[i, 0]), int(offsets[i, 1])
        if not (0 <= dy <= 2 * pad and 0 <= dx <= 2 * pad):
            raise ConfigurationError(f"crop offset ({dy}, {dx}) outside [0, {2 * pad}]")
        out[i] = padded[i, :, dy : dy + h, dx : dx + w]
    return out


def horizontal_flip(batch: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = batch.copy()
    out[mask] = out[mask][..., ::-1]
    return out


def augment_and_normalize(
    batch: np.ndarray,
    cfg: AugmentConfig,
    train: bool,
    rng: Optional[np.random.Generator] = None,
    offsets: Optional[np.ndarray] = None,
    flips: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Random crop + horizontal flip (train only), then per-channel normalization

    ``offsets`` (N×2) and ``flips`` (N bools) override the random draws.
    """
    if batch.ndim != 4:
        raise ShapeError(f"expected an N×C×H×W batch, got {batch.shape}")
    batch = np.asarray(batch, dtype=np.float32)
    if train:
        rng = rng or np.random.default_rng(0)
        n = batch.shape[0]
        if cfg.crop_pad:
            if offsets is None:
                offsets = rng.integers(0, 2 * cfg.crop_pad + 1, size=(n, 2))
            batch = random_crop(batch, cfg.crop_pad, np.asarray(offsets))
        if flips is None and cfg.hflip_prob > 0:
            flips = rng.random(n) < cfg.hflip_prob
        if flips is not None:
            batch = horizontal_flip(batch, np.asarray(flips, dtype=bool))
    return normalize(batch, cfg)
