"""Pack tokenized documents into fixed-length training blocks and persist them."""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .bpe import Tokenizer

BLOCK_MAGIC = b"LRBK"
BLOCK_VERSION = 1
# magic, version, block_len, block_count, vocab_size
_HEADER = struct.Struct("<4sIIQI")


class BlockFileError(ValueError):
    pass


def pretokenize_corpus(tok: Tokenizer, docs: Iterable[str], block_len: int) -> Iterator[np.ndarray]:
    """Encode each document, append end-of-text, concatenate, cut into full blocks.

    The trailing partial block is dropped.
    """
    if block_len < 2:
        raise ValueError("block_len must be >= 2")
    eot = tok.eot_id
    buf: list[int] = []
    for text in docs:
        buf.extend(tok.encode(text))
        buf.append(eot)
        while len(buf) >= block_len:
            yield np.asarray(buf[:block_len], dtype=np.uint32)
            del buf[:block_len]


def write_blocks(f, blocks: Iterable[np.ndarray], block_len: int, vocab_size: int) -> int:
    """Write header + blocks to an open, seekable binary file. Returns block count."""
    start = f.tell()
    f.write(_HEADER.pack(BLOCK_MAGIC, BLOCK_VERSION, block_len, 0, vocab_size))
    n = 0
    for b in blocks:
        b = np.asarray(b)
        if b.shape != (block_len,):
            raise BlockFileError(f"block shape {b.shape} != ({block_len},)")
        if b.size and int(b.max()) >= vocab_size:
            raise BlockFileError("token id outside vocabulary")
        f.write(b.astype("<u4").tobytes())
        n += 1
    end = f.tell()
    f.seek(start)
    f.write(_HEADER.pack(BLOCK_MAGIC, BLOCK_VERSION, block_len, n, vocab_size))
    f.seek(end)
    return n


def read_header(path: str | Path) -> dict:
    with open(path, "rb") as f:
        raw = f.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise BlockFileError(f"{path}: truncated header")
    magic, version, block_len, count, vocab = _HEADER.unpack(raw)
    if magic != BLOCK_MAGIC:
        raise BlockFileError(f"{path}: bad magic {magic!r}")
    if version != BLOCK_VERSION:
        raise BlockFileError(f"{path}: unsupported version {version}")
    return {"block_len": block_len, "block_count": count, "vocab_size": vocab}


def read_blocks(path: str | Path) -> tuple[np.ndarray, dict]:
    """Memory-map a block file as a (block_count, block_len) uint32 array."""
    hdr = read_header(path)
    expected = _HEADER.size + 4 * hdr["block_len"] * hdr["block_count"]
    size = Path(path).stat().st_size
    if size != expected:
        raise BlockFileError(f"{path}: size {size} != expected {expected}")
    if hdr["block_count"] == 0:
        return np.zeros((0, hdr["block_len"]), dtype=np.uint32), hdr
    arr = np.memmap(path, dtype="<u4", mode="r", offset=_HEADER.size,
                    shape=(hdr["block_count"], hdr["block_len"]))
    return arr, hdr
