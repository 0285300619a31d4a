from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources

PRESETS = ("50m", "150m", "300m", "600m", "tiny")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    n_layers: int
    hidden: int
    n_heads: int
    n_kv_heads: int | None = None
    intermediate: int = 0
    context_len: int = 1024
    rope_base: float = 10000.0
    norm_eps: float = 1e-5

    def __post_init__(self):
        if self.n_kv_heads is None:
            object.__setattr__(self, "n_kv_heads", self.n_heads)
        for name in ("vocab_size", "n_layers", "hidden", "n_heads", "n_kv_heads", "intermediate", "context_len"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.hidden % self.n_heads:
            raise ConfigError(f"hidden {self.hidden} not divisible by n_heads {self.n_heads}")
        if self.n_heads % self.n_kv_heads:
            raise ConfigError(f"n_heads {self.n_heads} not divisible by n_kv_heads {self.n_kv_heads}")
        if self.head_dim % 2:
            raise ConfigError(f"head_dim {self.head_dim} must be even for rotary embeddings")
        if self.rope_base <= 0 or self.norm_eps <= 0:
            raise ConfigError("rope_base and norm_eps must be positive")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.n_heads

    @property
    def kv_dim(self) -> int:
        return self.head_dim * self.n_kv_heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def with_(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


def load_preset(name: str) -> tuple[ModelConfig, float]:
    """Return (config, peak learning rate) for a bundled preset."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    raw = json.loads(resources.files("lrlm.presets").joinpath(f"{name}.json").read_text(encoding="utf-8"))
    peak_lr = raw.pop("peak_lr")
    return ModelConfig.from_dict(raw), peak_lr


def count_parameters(cfg: ModelConfig) -> int:
    """Closed-form parameter count: no biases, embedding tied with the output layer."""
    attn = 2 * cfg.hidden * cfg.hidden + 2 * cfg.hidden * cfg.kv_dim
    ffn = 3 * cfg.hidden * cfg.intermediate
    per_layer = attn + ffn + 2 * cfg.hidden
    return cfg.vocab_size * cfg.hidden + cfg.n_layers * per_layer + cfg.hidden
