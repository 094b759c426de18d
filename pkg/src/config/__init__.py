from src.config.config import config
from src.config.presets import TrainConfig, load_train_config, presets

__all__ = ["TrainConfig", "config", "load_train_config", "presets"]
