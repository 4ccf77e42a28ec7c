"""Canonical JSON encoding and hashing.

Sorted keys, no whitespace, UTF-8, floats as the shortest decimal that
round-trips. NaN and infinities are rejected so encodings stay portable.
"""
import hashlib
import json
from dataclasses import asdict, is_dataclass
from enum import Enum
from typing import Any, Iterable, Mapping

FIELD_SEPARATOR = b"\x1f"

_ALLOWED_SCALARS = (str, int, float, bool, type(None))


def _normalize(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if is_dataclass(value) and not isinstance(value, type):
        return _normalize(asdict(value))
    if isinstance(value, Mapping):
        return {str(k): _normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_normalize(v) for v in value]
    if isinstance(value, _ALLOWED_SCALARS):
        return value
    raise TypeError(f"Unsupported payload type for canonicalization: {type(value)!r}")


def canonical_json(payload: Any) -> str:
    return json.dumps(
        _normalize(payload),
        ensure_ascii=False,
        sort_keys=True,
        separators=(",", ":"),
        allow_nan=False,
    )


def canonical_bytes(payload: Any) -> bytes:
    return canonical_json(payload).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_fields(fields: Iterable[Any]) -> str:
    """SHA-256 over fields joined by the unit separator (0x1F)."""
    parts = []
    for field in fields:
        if isinstance(field, bytes):
            parts.append(field)
        else:
            parts.append(str(field).encode("utf-8"))
    return sha256_hex(FIELD_SEPARATOR.join(parts))


def format_float17(value: float) -> str:
    """Decimal rendering with 17 significant digits (exact for float64)."""
    return format(float(value), ".17g")
