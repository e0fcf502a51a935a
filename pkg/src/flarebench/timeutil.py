"""UTC timestamp parsing and formatting.

All timestamps are timezone-aware UTC datetimes. Naive inputs are taken to
be UTC; a trailing ``Z`` or `` UTC`` suffix is accepted.
"""
from datetime import datetime, timezone

from .errors import ParseError


def parse_utc(text):
    if isinstance(text, datetime):
        return text if text.tzinfo else text.replace(tzinfo=timezone.utc)
    raw = str(text).strip()
    if raw.endswith(" UTC"):
        raw = raw[:-4]
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    try:
        stamp = datetime.fromisoformat(raw)
    except ValueError:
        raise ParseError(f"not an ISO-8601 timestamp: {text!r}") from None
    if stamp.tzinfo is None:
        return stamp.replace(tzinfo=timezone.utc)
    return stamp.astimezone(timezone.utc)


def format_utc(stamp):
    """Render as ``YYYY-MM-DDTHH:MM:SSZ``."""
    return parse_utc(stamp).strftime("%Y-%m-%dT%H:%M:%SZ")
