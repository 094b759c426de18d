"""
Run presets

Hyperparameters for a training run. The three named presets are the
accuracy/efficiency operating points; a JSON file with the same field names
can be used instead of a preset name.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Optional

from src.gating.gate import GateConfig
from src.utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

DATASETS = ("cifar10", "mnist")


@dataclass(frozen=True)
class TrainConfig:
    name: str = "balanced"
    lambda_flops: float = 3.0
    lambda_cons: float = 0.01
    tau_target: float = 0.70
    gamma0: float = -2.5
    learnable_gamma: bool = True
    epochs: int = 160
    warmup_epochs: int = 40
    batch_size: int = 128
    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    temperature: float = 1.0
    temperature_final: Optional[float] = None
    inference_threshold: float = 0.45
    seed: int = 0
    dataset: str = "cifar10"
    subset_train: Optional[int] = None
    subset_test: Optional[int] = None

    def validate(self) -> "TrainConfig":
        if self.dataset not in DATASETS:
            raise ConfigurationError(f"Unknown dataset '{self.dataset}'. Valid options: {list(DATASETS)}")
        if not 0.0 < self.tau_target <= 1.0:
            raise ConfigurationError(f"tau_target must lie in (0, 1], got {self.tau_target}")
        if self.lambda_flops < 0 or self.lambda_cons < 0:
            raise ConfigurationError("loss weights must be >= 0")
        if self.epochs < 1 or self.warmup_epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs, warmup_epochs and batch_size must be >= 1")
        for size_field in ("subset_train", "subset_test"):
            value = getattr(self, size_field)
            if value is not None and value < 1:
                raise ConfigurationError(f"{size_field} must be >= 1, got {value}")
        self.gate_config()
        return self

    def gate_config(self) -> GateConfig:
        return GateConfig(
            gamma=self.gamma0,
            learnable_gamma=self.learnable_gamma,
            temperature=self.temperature,
            temperature_final=self.temperature_final,
            inference_threshold=self.inference_threshold,
            rng_seed=self.seed,
        ).validate()

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


AGGRESSIVE = TrainConfig(name="aggressive", lambda_flops=5.0, lambda_cons=0.01, tau_target=0.60, gamma0=-3.0)
BALANCED = TrainConfig(name="balanced", lambda_flops=3.0, lambda_cons=0.01, tau_target=0.70, gamma0=-2.5)
CONSERVATIVE = TrainConfig(name="conservative", lambda_flops=2.5, lambda_cons=0.05, tau_target=0.72, gamma0=-2.0)

# Preset dictionary
presets = {
    "aggressive": AGGRESSIVE,
    "balanced": BALANCED,
    "conservative": CONSERVATIVE,
    "default": BALANCED,
}


def _from_file(path: str) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: run config must be a JSON object")
    base_name = raw.pop("preset", "default")
    if base_name not in presets:
        raise ConfigurationError(f"{path}: unknown base preset '{base_name}'. Valid presets: {sorted(presets)}")
    base = presets[base_name]
    raw.setdefault("name", os.path.splitext(os.path.basename(path))[0])
    return _override(base, raw)


def _override(cfg: TrainConfig, overrides: Dict[str, Any]) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise ConfigurationError(f"Unknown config field(s) {unknown}")
    return replace(cfg, **overrides)


def load_train_config(name_or_path: str, **overrides) -> TrainConfig:
    """Resolve a preset name or a JSON file, then apply non-None overrides"""
    key = name_or_path.lower()
    if key in presets:
        cfg = presets[key]
    elif name_or_path.endswith(".json") and os.path.exists(name_or_path):
        cfg = _from_file(name_or_path)
    else:
        valid = sorted(k for k in presets if k != "default")
        raise ConfigurationError(f"Unknown preset '{name_or_path}'. Valid presets: {valid}")
    cfg = _override(cfg, {k: v for k, v in overrides.items() if v is not None})
    logger.debug(f"Resolved run config: {cfg.to_dict()}")
    return cfg.validate()
