"""Reversible byte <-> printable character map for byte-level BPE."""

from __future__ import annotations

from functools import lru_cache


@lru_cache(maxsize=None)
def bytes_to_unicode() -> dict[int, str]:
    # Printable ASCII and most of Latin-1 map to themselves; the remaining 68
    # bytes are shifted to U+0100 upward in byte order.
    keep = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) + list(range(ord("®"), ord("ÿ") + 1))
    forward = {b: chr(b) for b in keep}
    n = 0
    for b in range(256):
        if b not in forward:
            forward[b] = chr(256 + n)
            n += 1
    return forward


@lru_cache(maxsize=None)
def unicode_to_bytes() -> dict[str, int]:
    return {c: b for b, c in bytes_to_unicode().items()}


def encode_bytes(data: bytes) -> str:
    fwd = bytes_to_unicode()
    return "".join(fwd[b] for b in data)


def decode_symbols(symbols: str) -> bytes:
    inv = unicode_to_bytes()
    return bytes(inv[c] for c in symbols)
