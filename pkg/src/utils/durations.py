"""Duration literals: ``[0-9]+(s|m|h|d)``."""
import re
from typing import Union

from src.errors import PlatformValidationError

_UNITS = {"s": 1, "m": 60, "h": 3600, "d": 86400}
_DURATION_RE = re.compile(r"^([0-9]+)([smhd])$")


def parse_duration(text: Union[str, int, float]) -> int:
    """Parse a duration literal into whole seconds.

    Plain numbers are taken as seconds, so config files may use either form.
    """
    if isinstance(text, bool):
        raise PlatformValidationError(f"Invalid duration: {text!r}")
    if isinstance(text, (int, float)):
        if text < 0:
            raise PlatformValidationError(f"Negative duration: {text!r}")
        return int(text)
    match = _DURATION_RE.match(text.strip())
    if not match:
        raise PlatformValidationError(f"Invalid duration: {text!r}")
    return int(match.group(1)) * _UNITS[match.group(2)]


def parse_duration_ms(text: Union[str, int, float]) -> int:
    return parse_duration(text) * 1000


def format_duration(seconds: int) -> str:
    """Render seconds with the largest unit that divides them exactly."""
    seconds = int(seconds)
    if seconds == 0:
        return "0s"
    for unit in ("d", "h", "m"):
        size = _UNITS[unit]
        if seconds % size == 0:
            return f"{seconds // size}{unit}"
    return f"{seconds}s"
