"""
Time utility functions

UTC timestamps for run metadata, compact run-directory stamps and
human-readable durations.
"""

import logging
from datetime import datetime, timezone
from typing import Optional

logger = logging.getLogger(__name__)

RUN_STAMP_FORMAT = "%Y%m%d_%H%M%S"


def get_current_utc() -> datetime:
    """Get current UTC timestamp"""
    return datetime.now(timezone.utc)


def ensure_utc(dt: datetime) -> datetime:
    """Ensure datetime is in UTC timezone"""
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_for_storage(dt: datetime) -> str:
    """ISO 8601 string in UTC"""
    return ensure_utc(dt).isoformat()


def run_stamp(dt: Optional[datetime] = None) -> str:
    return ensure_utc(dt or get_current_utc()).strftime(RUN_STAMP_FORMAT)


def format_duration(seconds: float) -> str:
    """1.234 -> '1.23s', 75 -> '1m15s', 3725 -> '1h02m05s'"""
    if seconds < 60:
        return f"{seconds:.2f}s"
    minutes, secs = divmod(int(round(seconds)), 60)
    if minutes < 60:
        return f"{minutes}m{secs:02d}s"
    hours, minutes = divmod(minutes, 60)
    return f"{hours}h{minutes:02d}m{secs:02d}s"
