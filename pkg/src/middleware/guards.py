"""
Centralized error handling and numeric guards for the training loop
"""

import json
import logging
import math
import sys
import traceback
from functools import wraps

import click
import numpy as np

from src.utils.errors import (
    ConfigurationError,
    CosineGateError,
    DataFormatError,
    TrainingDivergedError,
)
from src.utils.time_util import format_for_storage, get_current_utc

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3


class ErrorHandler:
    """Structured error records for the command line"""

    @staticmethod
    def describe(exc, command=None, include_trace=False):
        if isinstance(exc, (ConfigurationError, DataFormatError, FileNotFoundError)):
            kind = "Input Error"
        elif isinstance(exc, TrainingDivergedError):
            kind = "Training Diverged"
        elif isinstance(exc, CosineGateError):
            kind = "Engine Error"
        else:
            kind = "Internal Error"

        record = {
            "error": kind,
            "type": type(exc).__name__,
            "message": str(exc),
            "timestamp": format_for_storage(get_current_utc()),
            "command": command,
        }
        dump_path = getattr(exc, "dump_path", None)
        if dump_path:
            record["dump"] = dump_path
        if include_trace:
            record["trace"] = traceback.format_exc()
        return record

    @staticmethod
    def exit_code(exc):
        if isinstance(exc, TrainingDivergedError):
            return EXIT_DIVERGED
        if isinstance(exc, (ConfigurationError, DataFormatError, FileNotFoundError)):
            return EXIT_USAGE
        return EXIT_FAILURE


def finite_guard(value, what, on_failure=None):
    """Raise TrainingDivergedError when ``value`` is NaN or infinite

    ``on_failure`` is called first and may return the path of a diagnostic
    dump, which is attached to the error.
    """
    value = float(value)
    if math.isfinite(value):
        return value
    dump_path = None
    if on_failure is not None:
        try:
            dump_path = on_failure()
        except Exception as e:
            logger.error(f"Failed to write divergence dump: {str(e)}")
    logger.error(f"Non-finite {what}: {value} (dump: {dump_path})")
    raise TrainingDivergedError(f"non-finite {what} ({value})", dump_path=dump_path)


def finite_parameters_guard(named_params, what, on_failure=None):
    """Raise TrainingDivergedError naming the first parameter with a NaN or infinite entry"""
    for name, param in named_params:
        if not param.is_finite():
            bad = param.data[~np.isfinite(param.data)].flat[0]
            finite_guard(bad, f"parameter {name} after {what}", on_failure=on_failure)


def _debug_enabled(debug):
    if debug:
        return True
    ctx = click.get_current_context(silent=True)
    settings = ctx.obj.get("settings") if ctx is not None and isinstance(ctx.obj, dict) else None
    return bool(getattr(settings, "DEBUG", False))


def command_error_handler(command, debug=False):
    """Turn exceptions raised by a CLI command into a JSON error line and an exit code

    The trace is included when ``debug`` is set or the CLI settings have DEBUG on.
    """

    def decorator(f):
        @wraps(f)
        def decorated_function(*args, **kwargs):
            try:
                return f(*args, **kwargs)
            except (click.exceptions.ClickException, click.exceptions.Exit, click.exceptions.Abort):
                raise
            except (CosineGateError, FileNotFoundError) as e:
                logger.error(f"{command} failed: {str(e)}")
                error = e
                record = ErrorHandler.describe(e, command)
            except Exception as e:
                logger.error(f"Unhandled exception in {command}: {str(e)}", exc_info=True)
                error = e
                record = ErrorHandler.describe(e, command, include_trace=_debug_enabled(debug))
            click.echo(json.dumps(record), err=True)
            sys.exit(ErrorHandler.exit_code(error))

        return decorated_function

    return decorator
