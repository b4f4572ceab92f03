"""Deterministic key-value store used as the replicated application."""

from __future__ import annotations

from . import crypto
from .encoding import encode


class KeyValueStore:
    """Supports ``put k v``, ``get k`` and ``incr k``; anything else is a no-op.

    ``incr`` returns the new value, so responses depend on the whole history
    of the key and divergent histories show up in replies.
    """

    def __init__(self, data: dict[bytes, bytes] | None = None):
        self.data: dict[bytes, bytes] = dict(data or {})

    def execute(self, op: bytes) -> bytes:
        parts = op.split(b" ", 2)
        cmd = parts[0]
        if cmd == b"put" and len(parts) == 3:
            self.data[parts[1]] = parts[2]
            return b"OK"
        if cmd == b"get" and len(parts) >= 2:
            return self.data.get(parts[1], b"")
        if cmd == b"incr" and len(parts) >= 2:
            try:
                value = int(self.data.get(parts[1], b"0")) + 1
            except ValueError:
                return b"ERR"
            self.data[parts[1]] = str(value).encode()
            return self.data[parts[1]]
        return b"NOOP"

    def snapshot(self) -> dict[bytes, bytes]:
        return dict(self.data)

    @classmethod
    def restore(cls, snapshot: dict[bytes, bytes]) -> KeyValueStore:
        return cls(snapshot)

    def digest(self) -> bytes:
        return crypto.digest(encode(sorted(self.data.items())))
