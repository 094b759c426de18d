import os

from dotenv import load_dotenv

# Load environment variables
load_dotenv()


def _flag(name: str, default: str = "false") -> bool:
    return os.environ.get(name, default).strip().lower() in ("1", "true", "yes", "on")


class Config:
    """Base configuration class

    Process settings only. Anything that changes training results comes from a
    preset or a JSON run config, never from the environment.
    """

    # Logging
    LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO")
    LOG_FILE = os.environ.get("LOG_FILE", "logs/cosinegate.log")

    # Run artifacts (metrics CSV, checkpoints, gate traces)
    OUTPUT_DIR = os.environ.get("OUTPUT_DIR", "runs")

    # Finite-value check on every recorded tape operation
    ANOMALY_DETECTION = _flag("ANOMALY_DETECTION")

    # Thread-pool shards used by evaluate()
    EVAL_WORKERS = int(os.environ.get("EVAL_WORKERS", 1))

    # Stack traces in the JSON error record of a failed command
    DEBUG = _flag("DEBUG")


class DevelopmentConfig(Config):
    """Development configuration"""

    DEBUG = True
    LOG_LEVEL = os.environ.get("LOG_LEVEL", "DEBUG")


class ProductionConfig(Config):
    """Production configuration"""


class TestingConfig(Config):
    """Testing configuration"""

    DEBUG = False
    LOG_FILE = os.environ.get("TEST_LOG_FILE", "logs/cosinegate-test.log")
    ANOMALY_DETECTION = True
    EVAL_WORKERS = 1


# Configuration dictionary
config = {
    "development": DevelopmentConfig,
    "production": ProductionConfig,
    "testing": TestingConfig,
    "default": ProductionConfig,
}
