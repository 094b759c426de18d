"""
Resource monitoring and epoch timing middleware
"""

import logging
import os
import time
from functools import wraps

import psutil

from src.utils.time_util import format_for_storage, get_current_utc

logger = logging.getLogger(__name__)


class ResourceMonitor:
    """Process and host resource snapshot"""

    @staticmethod
    def snapshot():
        data = {"timestamp": format_for_storage(get_current_utc())}
        try:
            data["process"] = ResourceMonitor._get_process_metrics()
            data["system"] = ResourceMonitor._get_system_metrics()
        except Exception as e:
            data["error"] = str(e)
            logger.error(f"Resource snapshot error: {str(e)}")
        return data

    @staticmethod
    def _get_process_metrics():
        proc = psutil.Process(os.getpid())
        with proc.oneshot():
            return {
                "rss_mb": round(proc.memory_info().rss / 1024 / 1024, 2),
                "cpu_percent": proc.cpu_percent(interval=None),
                "threads": proc.num_threads(),
            }

    @staticmethod
    def _get_system_metrics():
        return {
            "cpu_count": psutil.cpu_count(logical=True),
            "memory_percent": psutil.virtual_memory().percent,
            "memory_available_mb": round(psutil.virtual_memory().available / 1024 / 1024, 2),
            "load_average": (list(psutil.getloadavg()) if hasattr(psutil, "getloadavg") else None),
        }


def epoch_metrics_middleware(label="epoch"):
    """Time the wrapped call and log duration plus resident memory"""

    def decorator(f):
        @wraps(f)
        def decorated_function(*args, **kwargs):
            start_time = time.time()
            success = True
            try:
                return f(*args, **kwargs)
            except Exception:
                success = False
                raise
            finally:
                duration = time.time() - start_time
                try:
                    rss = ResourceMonitor._get_process_metrics()["rss_mb"]
                except Exception:
                    rss = float("nan")
                logger.info(
                    f"EPOCH_METRICS: {label} {f.__name__} duration={duration:.3f}s rss={rss}MB success={success}"
                )

        return decorated_function

    return decorator
