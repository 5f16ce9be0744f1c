"""Canonical structured-text serialization.

Everything that crosses a process boundary or gets hashed (game states, maps,
events, wire messages, scenario files) is rendered as JSON with sorted keys and
compact separators, so that byte-identity is meaningful: two equal values always
serialize to the same bytes.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any


def canonical_dumps(obj: Any) -> str:
    """Render a plain dict/list tree in canonical form (sorted keys, ASCII)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def canonical_bytes(obj: Any) -> bytes:
    return canonical_dumps(obj).encode("utf-8")


def canonical_loads(text: str | bytes) -> Any:
    return json.loads(text)


def digest(obj: Any) -> str:
    """Hex SHA-256 of the canonical form. Used for state hashes."""
    return hashlib.sha256(canonical_bytes(obj)).hexdigest()
