"""Length-normalized candidate log-likelihood under a causal language model."""

from __future__ import annotations

from typing import Protocol

import numpy as np

from ..model import ModelConfig, forward
from ..model.ops import log_softmax
from ..tokenizer import Tokenizer


class ContextOverflow(ValueError):
    pass


class ScoringModel(Protocol):
    context_len: int

    def logits(self, ids: np.ndarray) -> np.ndarray:
        """(T,) token ids -> (T, vocab) next-token logits."""


class NumpyLM:
    """Adapter from (params, config) to the ScoringModel interface."""

    def __init__(self, params, cfg: ModelConfig, name: str = "model"):
        self.params = params
        self.cfg = cfg
        self.name = name
        self.context_len = cfg.context_len

    def logits(self, ids):
        return forward(self.params, np.asarray(ids, dtype=np.int64), self.cfg, keep_tape=False)[0]


def _common_prefix(a: list[int], b: list[int]) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def candidate_token_split(tok: Tokenizer, prompt: str, candidate: str) -> tuple[list[int], int]:
    """Token ids of start + prompt + candidate and the index of the first candidate token.

    The end-of-text id is prepended as a start token so the first candidate
    token is always conditioned on something. If a merge crosses the
    prompt/candidate boundary, the candidate span starts where the two
    encodings diverge.
    """
    start = [tok.eot_id] if tok.specials else []
    prefix = start + tok.encode(prompt)
    full = start + tok.encode(prompt + candidate)
    n = _common_prefix(prefix, full)
    if n == len(full):
        raise ValueError(f"candidate {candidate!r} adds no tokens")
    if n == 0:
        raise ValueError("cannot score the first token without a start token")
    return full, n


def score_candidate(model: ScoringModel, tok: Tokenizer, prompt: str, candidate: str) -> float:
    """Mean log-probability of the candidate's tokens given the prompt (teacher forcing)."""
    if not candidate:
        raise ValueError("empty candidate")
    full, n = candidate_token_split(tok, prompt, candidate)
    if len(full) - 1 > model.context_len:
        raise ContextOverflow(f"{len(full) - 1} tokens exceed context {model.context_len}")
    lp = log_softmax(np.asarray(model.logits(np.asarray(full[:-1])), dtype=np.float64))
    positions = np.arange(n, len(full))
    targets = np.asarray(full[n:])
    return float(np.sum(lp[positions - 1, targets]) / len(targets))
