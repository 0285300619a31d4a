"""AdamW with decoupled weight decay, warmup + cosine schedule, global-norm clipping."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..model.transformer import is_norm


class NonFiniteError(FloatingPointError):
    pass


def default_warmup(total_steps: int) -> int:
    return min(total_steps, max(10, round(0.01 * total_steps)))


@dataclass(frozen=True)
class OptimizerConfig:
    peak_lr: float = 3e-4
    min_lr: float | None = None
    warmup_steps: int | None = None
    total_steps: int = 1000
    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.1
    clip_norm: float = 1.0
    eps: float = 1e-8

    def __post_init__(self):
        if self.min_lr is None:
            object.__setattr__(self, "min_lr", 0.1 * self.peak_lr)
        if self.warmup_steps is None:
            object.__setattr__(self, "warmup_steps", default_warmup(self.total_steps))
        if not 0 < self.warmup_steps <= self.total_steps:
            raise ValueError(f"need 0 < warmup_steps ({self.warmup_steps}) <= total_steps ({self.total_steps})")
        if not 0 <= self.min_lr <= self.peak_lr:
            raise ValueError(f"need 0 <= min_lr ({self.min_lr}) <= peak_lr ({self.peak_lr})")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.eps <= 0 or self.weight_decay < 0:
            raise ValueError("eps must be positive and weight_decay non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown optimizer keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class OptimizerState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "OptimizerState":
        return cls(0, {k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def lr_at_step(step: int, cfg: OptimizerConfig) -> float:
    if not 0 <= step <= cfg.total_steps:
        raise ValueError(f"step {step} outside [0, {cfg.total_steps}]")
    if step < cfg.warmup_steps:
        return cfg.peak_lr * step / cfg.warmup_steps
    span = cfg.total_steps - cfg.warmup_steps
    if span == 0:
        return cfg.peak_lr
    progress = (step - cfg.warmup_steps) / span
    return cfg.min_lr + 0.5 * (cfg.peak_lr - cfg.min_lr) * (1.0 + math.cos(math.pi * progress))


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))


def clip_gradients(grads: dict[str, np.ndarray], clip_norm: float):
    """Scale all gradients so their joint L2 norm is at most ``clip_norm``.

    Returns ``(grads, pre_clip_norm)``; input arrays are not modified.
    """
    norm = global_norm(grads)
    if not math.isfinite(norm):
        bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
        raise NonFiniteError(f"non-finite gradient norm; offending tensors: {bad[:5]}")
    if norm > clip_norm:
        scale = clip_norm / norm
        grads = {k: g * np.asarray(scale, dtype=g.dtype) for k, g in grads.items()}
    return grads, norm


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState,
               cfg: OptimizerConfig, lr: float) -> None:
    """One in-place AdamW update; norm weights are not decayed."""
    if set(grads) != set(params):
        raise ValueError("gradient names do not match parameters")
    if not state.m:
        state.m = {k: np.zeros_like(p) for k, p in params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.items()}
    state.step += 1
    t = state.step
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        if cfg.weight_decay and not is_norm(name):
            update = update + cfg.weight_decay * p
        p -= lr * update


def tokens_per_parameter(token_count: float, param_count: float) -> float:
    if param_count <= 0:
        raise ValueError("param_count must be positive")
    return token_count / param_count
