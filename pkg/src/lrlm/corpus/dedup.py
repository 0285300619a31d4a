"""Exact deduplication on MD5 digests of cleaned text."""

from __future__ import annotations

import hashlib
import struct
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from ..io import atomic_open

HASH_MAGIC = b"MD5H"
_HEADER = struct.Struct("<4sQ")


class HashOrigin(str, Enum):
    WITHIN_RUN = "within-run"
    EXTERNAL = "external-reference"


class HashSetError(Exception):
    """Reference hash file is missing or malformed."""


def md5_digest(text: str) -> bytes:
    return hashlib.md5(text.encode("utf-8")).digest()


class HashSet:
    """A set of 16-byte digests tagged with where they came from."""

    def __init__(self, digests: Iterable[bytes] = (), origin: HashOrigin = HashOrigin.WITHIN_RUN):
        self.origin = HashOrigin(origin)
        self.digests: set[bytes] = set()
        for d in digests:
            self.add(d)

    def add(self, digest: bytes) -> None:
        if len(digest) != 16:
            raise ValueError(f"MD5 digest must be 16 bytes, got {len(digest)}")
        self.digests.add(bytes(digest))

    def __contains__(self, digest: bytes) -> bool:
        return digest in self.digests

    def __len__(self) -> int:
        return len(self.digests)

    @classmethod
    def load(cls, path: str | Path) -> "HashSet":
        """Read either the binary digest file or one-hex-digest-per-line text."""
        try:
            raw = Path(path).read_bytes()
        except OSError as e:
            raise HashSetError(f"cannot read reference hashes {path}: {e}") from e
        if raw[:4] == HASH_MAGIC:
            if len(raw) < _HEADER.size:
                raise HashSetError(f"{path}: truncated header")
            _, count = _HEADER.unpack_from(raw)
            body = raw[_HEADER.size:]
            if len(body) != 16 * count:
                raise HashSetError(f"{path}: header says {count} digests, body holds {len(body) / 16:g}")
            return cls((body[i:i + 16] for i in range(0, len(body), 16)), HashOrigin.EXTERNAL)
        out = cls(origin=HashOrigin.EXTERNAL)
        try:
            for lineno, line in enumerate(raw.decode("ascii").splitlines(), 1):
                h = line.strip()
                if not h:
                    continue
                if len(h) != 32:
                    raise ValueError(f"line {lineno}: expected 32 hex characters")
                out.add(bytes.fromhex(h))
        except (UnicodeDecodeError, ValueError) as e:
            raise HashSetError(f"{path}: not a digest file ({e})") from e
        return out

    def save(self, path: str | Path, binary: bool = True) -> None:
        ordered = sorted(self.digests)
        if binary:
            data = _HEADER.pack(HASH_MAGIC, len(ordered)) + b"".join(ordered)
        else:
            data = "".join(d.hex() + "\n" for d in ordered).encode("ascii")
        with atomic_open(path, "wb") as f:
            f.write(data)


def dedup(docs: Iterable, reference: HashSet | None = None, seen: HashSet | None = None,
          stats: dict | None = None) -> Iterator:
    """Yield documents whose text digest is new to this run and absent from ``reference``.

    First occurrence wins and order is preserved. ``stats["dedup"]`` counts drops.
    """
    seen = seen if seen is not None else HashSet()
    ref = reference.digests if reference is not None else set()
    for doc in docs:
        d = md5_digest(doc.text)
        if d in ref or d in seen.digests:
            if stats is not None:
                stats["dedup"] = stats.get("dedup", 0) + 1
            continue
        seen.digests.add(d)
        yield doc
