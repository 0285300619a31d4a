"""Block-packed training loop with checkpointing and a CSV loss trace."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..io import atomic_open, read_json, write_json
from ..model import ModelConfig, load_checkpoint, loss_and_grads, save_checkpoint
from .optim import NonFiniteError, OptimizerConfig, OptimizerState, adamw_step, clip_gradients, lr_at_step

log = logging.getLogger(__name__)

TRACE_FIELDS = ("step", "lr", "loss", "grad_norm", "tokens_seen")


class TrainingAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class StepRecord:
    step: int
    lr: float
    loss: float
    grad_norm: float
    tokens_seen: int


def steps_per_epoch(n_blocks: int, batch_size: int) -> int:
    return max(1, math.ceil(n_blocks / batch_size))


def batch_indices(n_blocks: int, batch_size: int, seed: int, step: int) -> np.ndarray:
    """Block indices for ``step``: consecutive slices of per-epoch seeded permutations.

    Recomputed from (seed, step) alone so a resumed run sees the same batches.
    """
    perms: dict[int, np.ndarray] = {}
    out = []
    for j in range(step * batch_size, (step + 1) * batch_size):
        epoch, pos = divmod(j, n_blocks)
        if epoch not in perms:
            perms[epoch] = np.random.default_rng([seed, epoch]).permutation(n_blocks)
        out.append(perms[epoch][pos])
    return np.asarray(out, dtype=np.int64)


def checkpoint_paths(path: str | Path) -> tuple[Path, Path, Path]:
    path = Path(path)
    return path, path.with_suffix(path.suffix + ".optim"), path.with_suffix(path.suffix + ".json")


def save_training_state(path, cfg: ModelConfig, params, state: OptimizerState, opt_cfg: OptimizerConfig,
                        extra: dict | None = None) -> None:
    model_path, optim_path, side_path = checkpoint_paths(path)
    save_checkpoint(model_path, cfg, params)
    moments = {f"m.{k}": a for k, a in state.m.items()}
    moments.update({f"v.{k}": a for k, a in state.v.items()})
    save_checkpoint(optim_path, cfg, moments)
    write_json(side_path, {"step": state.step, "optimizer": opt_cfg.to_dict(), **(extra or {})})


def load_training_state(path):
    model_path, optim_path, side_path = checkpoint_paths(path)
    cfg, params = load_checkpoint(model_path)
    side = read_json(side_path)
    state = OptimizerState(step=int(side["step"]))
    if optim_path.exists():
        _, moments = load_checkpoint(optim_path)
        state.m = {k[2:]: a for k, a in moments.items() if k.startswith("m.")}
        state.v = {k[2:]: a for k, a in moments.items() if k.startswith("v.")}
    return cfg, params, state, OptimizerConfig.from_dict(side["optimizer"]), side


def train(params, blocks: np.ndarray, cfg: ModelConfig, opt_cfg: OptimizerConfig, *,
          batch_size: int = 64, seed: int = 0, state: OptimizerState | None = None,
          checkpoint_path: str | Path | None = None, checkpoint_every: int = 0,
          on_step: Callable[[StepRecord], None] | None = None) -> list[StepRecord]:
    """Run ``opt_cfg.total_steps`` optimizer steps over ``blocks`` (N, block_len).

    Each block supplies inputs ``block[:-1]`` and targets ``block[1:]``. The
    update taken from step index t (0-based) uses ``lr_at_step(t + 1)``; the
    loss recorded for step t is measured before that update. ``params`` is updated
    in place. A non-finite loss raises TrainingAborted without touching the
    last saved checkpoint.
    """
    blocks = np.asarray(blocks)
    if blocks.ndim != 2 or blocks.shape[0] == 0:
        raise ValueError(f"blocks must be a non-empty (N, block_len) array, got {blocks.shape}")
    if blocks.shape[1] - 1 > cfg.context_len:
        raise ValueError(f"block length {blocks.shape[1]} exceeds context_len {cfg.context_len} + 1")
    if blocks.shape[1] < 2:
        raise ValueError("blocks need at least two tokens")
    state = state or OptimizerState.zeros_like(params)
    n = blocks.shape[0]
    seq = blocks.shape[1] - 1
    trace: list[StepRecord] = []
    tokens_seen = state.step * batch_size * seq

    while state.step < opt_cfg.total_steps:
        step = state.step
        batch = blocks[batch_indices(n, batch_size, seed, step)].astype(np.int64)
        loss, grads = loss_and_grads(params, batch[:, :-1], batch[:, 1:], cfg)
        if not math.isfinite(loss):
            raise TrainingAborted(f"non-finite loss {loss} at step {step + 1}")
        try:
            grads, gnorm = clip_gradients(grads, opt_cfg.clip_norm)
        except NonFiniteError as e:
            raise TrainingAborted(f"step {step + 1}: {e}") from e
        lr = lr_at_step(step + 1, opt_cfg)
        adamw_step(params, grads, state, opt_cfg, lr)
        tokens_seen += batch_size * seq
        rec = StepRecord(step, lr, loss, gnorm, tokens_seen)
        trace.append(rec)
        if on_step:
            on_step(rec)
        if checkpoint_path and checkpoint_every and state.step % checkpoint_every == 0:
            save_training_state(checkpoint_path, cfg, params, state, opt_cfg, {"seed": seed, "batch_size": batch_size})
            log.info("checkpoint at step %d", state.step)
    if checkpoint_path:
        save_training_state(checkpoint_path, cfg, params, state, opt_cfg, {"seed": seed, "batch_size": batch_size})
    return trace


def write_trace(path: str | Path, trace: list[StepRecord], append: bool = False) -> None:
    rows = [[r.step, repr(r.lr), repr(r.loss), repr(r.grad_norm), r.tokens_seen] for r in trace]
    if append and Path(path).exists():
        with open(path, newline="", encoding="utf-8") as f:
            old = list(csv.reader(f))[1:]
        rows = old + rows
    with atomic_open(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        w.writerows(rows)
