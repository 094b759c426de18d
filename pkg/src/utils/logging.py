import logging
import os
from logging.handlers import RotatingFileHandler

from src.utils.time_util import format_for_storage, get_current_utc

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(settings):
    """Configure logging for the CLI process

    ``settings`` is a Config class (or anything with LOG_LEVEL / LOG_FILE attributes).
    """

    # Create logs directory if it doesn't exist
    log_dir = os.path.dirname(settings.LOG_FILE)
    if log_dir and not os.path.exists(log_dir):
        os.makedirs(log_dir)

    log_level = getattr(logging, str(settings.LOG_LEVEL).upper(), logging.INFO)
    formatter = logging.Formatter(LOG_FORMAT)

    # File handler with rotation
    file_handler = RotatingFileHandler(settings.LOG_FILE, maxBytes=10485760, backupCount=5)  # 10MB
    file_handler.setLevel(log_level)
    file_handler.setFormatter(formatter)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(log_level)
    console_handler.setFormatter(formatter)

    # Repeated CLI invocations in one process (tests) must not stack handlers
    root_logger = logging.getLogger()
    for handler in list(root_logger.handlers):
        if getattr(handler, "_cosinegate", False):
            root_logger.removeHandler(handler)
            handler.close()
    for handler in (file_handler, console_handler):
        handler._cosinegate = True
        root_logger.addHandler(handler)
    root_logger.setLevel(log_level)

    app_logger = logging.getLogger("cosinegate")
    app_logger.setLevel(log_level)
    return app_logger


def log_epoch_metrics(metrics, phase=None, duration=None):
    """Log one epoch's metrics row"""
    logger = logging.getLogger("cosinegate.training")

    log_data = metrics.to_dict() if hasattr(metrics, "to_dict") else dict(metrics)
    log_data["timestamp"] = format_for_storage(get_current_utc())
    if phase:
        log_data["phase"] = phase
    if duration is not None:
        log_data["duration"] = f"{duration:.3f}s"

    logger.info(f"Epoch: {log_data}")


def log_gate_activity(block_index, summary):
    """Log per-block routing statistics"""
    logger = logging.getLogger("cosinegate.gates")
    logger.debug(f"Gate Activity: {{'block': {block_index}, 'details': {summary}}}")
