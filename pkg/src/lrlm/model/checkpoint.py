"""Binary checkpoint: little-endian header with the full config, then named float32 tensors."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..io import atomic_open
from .config import ModelConfig

CKPT_MAGIC = b"LRCK"
CKPT_VERSION = 1
# magic, version, vocab_size, n_layers, hidden, n_heads, n_kv_heads,
# intermediate, context_len, rope_base, norm_eps, tensor count
_HEADER = struct.Struct("<4sI7IddI")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, cfg: ModelConfig, tensors: dict[str, np.ndarray]) -> None:
    with atomic_open(path, "wb") as f:
        f.write(_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, cfg.vocab_size, cfg.n_layers, cfg.hidden,
                             cfg.n_heads, cfg.n_kv_heads, cfg.intermediate, cfg.context_len,
                             cfg.rope_base, cfg.norm_eps, len(tensors)))
        for name, arr in tensors.items():
            raw = name.encode("utf-8")
            arr = np.ascontiguousarray(arr, dtype="<f4")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path: str | Path, dtype=np.float32) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or data[:4] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (_, version, vocab, n_layers, hidden, n_heads, n_kv, inter, ctx,
     rope_base, eps, n_tensors) = _HEADER.unpack_from(data)
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    cfg = ModelConfig(vocab, n_layers, hidden, n_heads, n_kv, inter, ctx, rope_base, eps)
    off = _HEADER.size
    tensors = {}
    try:
        for _ in range(n_tensors):
            (n,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off:off + n].decode("utf-8")
            off += n
            (ndim,) = struct.unpack_from("<B", data, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", data, off)
            off += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(shape)
            off += 4 * count
            tensors[name] = arr.astype(dtype)
    except (struct.error, ValueError) as e:
        raise CheckpointError(f"{path}: truncated or corrupt tensor table ({e})") from e
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")
    return cfg, tensors
