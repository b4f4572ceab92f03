"""Canonical binary encoding.

Every value is written as a one-byte tag followed by a fixed-layout or
length-prefixed body, and registered dataclasses are written field by field in
declaration order. The encoding is injective, so digests of encoded messages
are well defined and ``decode(encode(x)) == x``.
"""

from __future__ import annotations

import dataclasses
import struct
from typing import Any, Callable, TypeVar

T = TypeVar("T")

_by_code: dict[int, type] = {}
_by_type: dict[type, int] = {}


class DecodeError(ValueError):
    pass


def wire(code: int) -> Callable[[type[T]], type[T]]:
    """Register a dataclass for encoding under a stable numeric code."""

    def register(cls: type[T]) -> type[T]:
        if code in _by_code:
            raise ValueError(f"wire code {code} already used by {_by_code[code].__name__}")
        _by_code[code] = cls
        _by_type[cls] = code
        return cls

    return register


def wire_code(cls: type) -> int:
    return _by_type[cls]


def encode(value: Any) -> bytes:
    out: list[bytes] = []
    _encode(value, out)
    return b"".join(out)


def _encode(value: Any, out: list[bytes]) -> None:
    if value is None:
        out.append(b"N")
    elif value is True:
        out.append(b"T")
    elif value is False:
        out.append(b"F")
    elif isinstance(value, int):
        out.append(b"I" + struct.pack(">q", value))
    elif isinstance(value, (bytes, bytearray)):
        out.append(b"B" + struct.pack(">I", len(value)) + bytes(value))
    elif isinstance(value, str):
        raw = value.encode()
        out.append(b"S" + struct.pack(">I", len(raw)) + raw)
    elif isinstance(value, (tuple, list)):
        out.append(b"L" + struct.pack(">I", len(value)))
        for item in value:
            _encode(item, out)
    elif type(value) in _by_type:
        cached = value.__dict__.get("encoded")
        if cached is not None:
            out.append(cached)
            return
        fields = dataclasses.fields(value)
        out.append(b"M" + struct.pack(">HH", _by_type[type(value)], len(fields)))
        for f in fields:
            _encode(getattr(value, f.name), out)
    else:
        raise TypeError(f"cannot encode {type(value).__name__}")


def decode(data: bytes) -> Any:
    value, pos = _decode(data, 0)
    if pos != len(data):
        raise DecodeError(f"{len(data) - pos} trailing bytes")
    return value


def _take(data: bytes, pos: int, n: int) -> tuple[bytes, int]:
    if pos + n > len(data):
        raise DecodeError("truncated input")
    return data[pos : pos + n], pos + n


def _decode(data: bytes, pos: int) -> tuple[Any, int]:
    tag, pos = _take(data, pos, 1)
    if tag == b"N":
        return None, pos
    if tag == b"T":
        return True, pos
    if tag == b"F":
        return False, pos
    if tag == b"I":
        raw, pos = _take(data, pos, 8)
        return struct.unpack(">q", raw)[0], pos
    if tag in (b"B", b"S"):
        raw, pos = _take(data, pos, 4)
        body, pos = _take(data, pos, struct.unpack(">I", raw)[0])
        return (body if tag == b"B" else body.decode()), pos
    if tag == b"L":
        raw, pos = _take(data, pos, 4)
        items = []
        for _ in range(struct.unpack(">I", raw)[0]):
            item, pos = _decode(data, pos)
            items.append(item)
        return tuple(items), pos
    if tag == b"M":
        raw, pos = _take(data, pos, 4)
        code, count = struct.unpack(">HH", raw)
        cls = _by_code.get(code)
        if cls is None:
            raise DecodeError(f"unknown wire code {code}")
        if count != len(dataclasses.fields(cls)):
            raise DecodeError(f"{cls.__name__} expects {len(dataclasses.fields(cls))} fields")
        values = []
        for _ in range(count):
            item, pos = _decode(data, pos)
            values.append(item)
        return cls(*values), pos
    raise DecodeError(f"bad tag {tag!r} at offset {pos - 1}")
