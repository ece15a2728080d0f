"""Canonical JSON serialization and hashing.

Every byte that feeds a hash (transaction payloads, block headers, state
snapshots) is produced here, so digests are reproducible across replays,
peers, and process restarts.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

ZERO_HASH = "0" * 64

_HEX_DIGITS = frozenset("0123456789abcdef")


def to_canonical_json(obj: Any) -> str:
    """Serialize with lexicographically sorted keys and no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def to_canonical_bytes(obj: Any) -> bytes:
    return to_canonical_json(obj).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_obj(obj: Any) -> str:
    """SHA-256 of the canonical serialization, lowercase hex."""
    return sha256_hex(to_canonical_bytes(obj))


def is_hex_digest(value: Any, length: int = 64) -> bool:
    """True only for lowercase hex of exactly the given length.

    Case matters: "AB" and "ab" decode to the same bytes, so accepting
    mixed case would let single-bit mutations of on-ledger hex slip past
    byte-level integrity checks.
    """
    return (
        isinstance(value, str)
        and len(value) == length
        and all(c in _HEX_DIGITS for c in value)
    )
