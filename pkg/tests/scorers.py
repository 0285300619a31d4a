"""Hand-built scoring models with known outputs."""

import numpy as np

from lrlm.tokenizer import Tokenizer

TOK = Tokenizer.from_merges([])  # bytes + end-of-text, V = 257
V = len(TOK)


class Uniform:
    context_len = 4096

    def logits(self, ids):
        return np.zeros((len(ids), V))


class Table:
    """Zero logits except for ``{position: (token, value)}``."""

    context_len = 4096

    def __init__(self, spikes):
        self.spikes = spikes

    def logits(self, ids):
        out = np.zeros((len(ids), V))
        for pos, (token, value) in self.spikes.items():
            out[pos, token] = value
        return out


class GoldAware:
    """Pushes the next gold token up (sign=+1) or down (sign=-1) wherever the input follows a gold sequence."""

    context_len = 4096

    def __init__(self, gold_sequences, sign=1.0):
        self.gold = [list(g) for g in gold_sequences]
        self.sign = sign

    def logits(self, ids):
        ids = list(ids)
        out = np.zeros((len(ids), V))
        for g in self.gold:
            for i in range(min(len(ids), len(g) - 1)):
                if ids[: i + 1] != g[: i + 1]:
                    break
                out[i, g[i + 1]] += self.sign * 30.0
        return out


class Shifted:
    def __init__(self, inner, c):
        self.inner, self.c, self.context_len = inner, c, inner.context_len

    def logits(self, ids):
        return self.inner.logits(ids) + self.c
