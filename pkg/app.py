import logging
import os

import click

from src.config.config import config
from src.engine.tensor import set_anomaly_detection
from src.routes import COMMANDS
from src.utils.logging import setup_logging


def create_cli(config_name=None):
    """Command-line factory"""

    # Load configuration
    config_name = config_name or os.environ.get("COSINEGATE_ENV", "default")
    if config_name not in config:
        raise click.BadParameter(f"Unknown configuration '{config_name}'. Valid options: {sorted(config)}")
    settings = config[config_name]

    @click.group(help="Cosine-incompatibility gated residual networks")
    @click.pass_context
    def cli(ctx):
        ctx.ensure_object(dict)
        ctx.obj["settings"] = settings
        ctx.obj["config_name"] = config_name

    # Setup logging
    setup_logging(settings)
    set_anomaly_detection(settings.ANOMALY_DETECTION)
    logging.getLogger("cosinegate").debug(f"CLI created with '{config_name}' configuration")

    # Register commands
    for command in COMMANDS:
        cli.add_command(command)

    return cli


def main():
    create_cli()(prog_name="cosinegate")


if __name__ == "__main__":
    main()
