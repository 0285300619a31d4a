"""Byte-level BPE: training, encoding, decoding, persistence."""

from __future__ import annotations

import heapq
import json
import logging
import multiprocessing as mp
from collections import Counter, defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import regex

from ..io import atomic_open
from .bytemap import bytes_to_unicode, encode_bytes, unicode_to_bytes

log = logging.getLogger(__name__)

EOT = "<|endoftext|>"
DEFAULT_VOCAB_SIZE = 50257

# Letter runs, digit runs and other-symbol runs, each taking at most one
# leading space; leftover whitespace becomes its own pre-token.
PRETOKEN_RE = regex.compile(r" ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+")


class TokenizerError(ValueError):
    pass


def pretokenize(text: str) -> list[str]:
    return PRETOKEN_RE.findall(text)


def _count_chunk(texts: list[str]) -> Counter:
    c: Counter = Counter()
    for t in texts:
        c.update(pretokenize(t))
    return c


def count_pretokens(corpus: Iterable[str], workers: int = 1, chunk: int = 256) -> Counter:
    """Pre-token frequencies; sharded counts are summed, so the result is worker-independent."""
    if workers <= 1:
        return _count_chunk(list(corpus))

    def chunks():
        buf = []
        for t in corpus:
            buf.append(t)
            if len(buf) == chunk:
                yield buf
                buf = []
        if buf:
            yield buf

    total: Counter = Counter()
    with mp.get_context("spawn").Pool(workers) as pool:
        for c in pool.imap(_count_chunk, chunks()):
            total.update(c)
    return total


def _pairs(word: Sequence[str]):
    return zip(word, word[1:])


def _merge_word(word: tuple, a: str, b: str, ab: str) -> tuple:
    out = []
    i, n = 0, len(word)
    while i < n:
        if i < n - 1 and word[i] == a and word[i + 1] == b:
            out.append(ab)
            i += 2
        else:
            out.append(word[i])
            i += 1
    return tuple(out)


def train_bpe(corpus: Iterable[str], vocab_size: int = DEFAULT_VOCAB_SIZE,
              specials: Sequence[str] = (EOT,), workers: int = 1) -> "Tokenizer":
    """Learn merges until the vocabulary reaches ``vocab_size`` or no pair occurs twice.

    Ties between equally frequent pairs go to the smallest (left, right) pair
    under code-point string ordering.
    """
    specials = list(specials)
    if len(set(specials)) != len(specials):
        raise TokenizerError("duplicate special tokens")
    n_merges = vocab_size - 256 - len(specials)
    if n_merges < 0:
        raise TokenizerError(f"vocab_size {vocab_size} < 256 + {len(specials)} specials")

    counts = count_pretokens(corpus, workers)
    if not counts:
        raise TokenizerError("empty corpus")

    # sorted for a canonical word order independent of corpus iteration
    items = sorted(counts.items())
    words = [tuple(encode_bytes(w.encode("utf-8"))) for w, _ in items]
    freqs = [f for _, f in items]

    pair_counts: dict[tuple[str, str], int] = defaultdict(int)
    where: dict[tuple[str, str], set[int]] = defaultdict(set)
    for i, (w, f) in enumerate(zip(words, freqs)):
        for p in _pairs(w):
            pair_counts[p] += f
            where[p].add(i)

    heap = [(-c, a, b) for (a, b), c in pair_counts.items()]
    heapq.heapify(heap)
    merges: list[tuple[str, str]] = []
    produced = set(bytes_to_unicode().values()) | set(specials)
    # pairs whose concatenation is already a token (or a special) would
    # duplicate a vocab entry, so they are never merged
    banned: set[tuple[str, str]] = set()

    while len(merges) < n_merges and heap:
        neg, a, b = heapq.heappop(heap)
        if pair_counts.get((a, b), 0) != -neg:
            continue  # stale entry
        if -neg < 2:
            break
        ab = a + b
        if ab in produced:
            banned.add((a, b))
            pair_counts.pop((a, b))
            continue
        produced.add(ab)
        merges.append((a, b))
        touched: set[tuple[str, str]] = set()
        for i in sorted(where.pop((a, b))):
            w = words[i]
            new = _merge_word(w, a, b, ab)
            if new == w:
                continue
            f = freqs[i]
            for p in _pairs(w):
                pair_counts[p] -= f
                touched.add(p)
            for p in _pairs(new):
                pair_counts[p] += f
                where[p].add(i)
                touched.add(p)
            words[i] = new
        pair_counts.pop((a, b), None)
        touched.discard((a, b))
        for p in touched:
            c = pair_counts[p]
            if c <= 0:
                del pair_counts[p]
            elif p not in banned:
                heapq.heappush(heap, (-c, p[0], p[1]))

    log.info("trained %d merges (requested %d)", len(merges), n_merges)
    return Tokenizer.from_merges(merges, specials)


class Tokenizer:
    """Immutable byte-level BPE model: vocab, rank-ordered merges, specials."""

    def __init__(self, vocab: dict[str, int], merges: list[tuple[str, str]], specials: list[str]):
        self.vocab = dict(vocab)
        self.merges = [tuple(m) for m in merges]
        self.specials = list(specials)
        self._validate()
        self.id_to_token = {i: t for t, i in self.vocab.items()}
        self.ranks = {m: r for r, m in enumerate(self.merges)}
        self._special_ids = {self.vocab[s] for s in self.specials}
        self._cache: dict[str, list[int]] = {}

    @classmethod
    def from_merges(cls, merges: Sequence[tuple[str, str]], specials: Sequence[str] = (EOT,)) -> "Tokenizer":
        fwd = bytes_to_unicode()
        vocab = {fwd[b]: b for b in range(256)}
        for a, b in merges:
            vocab[a + b] = len(vocab)
        for s in specials:
            vocab[s] = len(vocab)
        return cls(vocab, list(merges), list(specials))

    def _validate(self) -> None:
        expected = 256 + len(self.merges) + len(self.specials)
        if len(self.vocab) != expected:
            raise TokenizerError(f"vocab has {len(self.vocab)} entries, expected {expected}")
        if sorted(self.vocab.values()) != list(range(len(self.vocab))):
            raise TokenizerError("token ids are not contiguous from 0")
        known = set(bytes_to_unicode().values())
        for a, b in self.merges:
            if a not in known or b not in known:
                raise TokenizerError(f"merge ({a!r}, {b!r}) uses an operand not yet produced")
            if a + b not in self.vocab:
                raise TokenizerError(f"merge product {a + b!r} missing from vocab")
            known.add(a + b)
        for s in self.specials:
            if s not in self.vocab:
                raise TokenizerError(f"special {s!r} missing from vocab")

    def __len__(self) -> int:
        return len(self.vocab)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def eot_id(self) -> int:
        if not self.specials:
            raise TokenizerError("tokenizer has no special tokens")
        return self.vocab[self.specials[0]]

    # -- encoding -------------------------------------------------------------

    def _bpe(self, symbols: str) -> list[str]:
        word = list(symbols)
        ranks = self.ranks
        while len(word) > 1:
            best = min(_pairs(word), key=lambda p: ranks.get(p, float("inf")))
            if best not in ranks:
                break
            word = list(_merge_word(tuple(word), best[0], best[1], best[0] + best[1]))
        return word

    def encode_pretoken(self, piece: str) -> list[int]:
        ids = self._cache.get(piece)
        if ids is None:
            ids = [self.vocab[t] for t in self._bpe(encode_bytes(piece.encode("utf-8")))]
            if len(self._cache) < 200_000:
                self._cache[piece] = ids
        return ids

    def encode(self, text: str) -> list[int]:
        out: list[int] = []
        for piece in pretokenize(text):
            out.extend(self.encode_pretoken(piece))
        return out

    # -- decoding -------------------------------------------------------------

    def decode_bytes(self, ids: Iterable[int]) -> bytes:
        inv = unicode_to_bytes()
        parts = []
        for i in ids:
            tok = self.id_to_token.get(int(i))
            if tok is None:
                raise TokenizerError(f"unknown token id {i}")
            if int(i) in self._special_ids:
                parts.append(tok.encode("utf-8"))
            else:
                parts.append(bytes(inv[c] for c in tok))
        return b"".join(parts)

    def decode(self, ids: Iterable[int], strict: bool = False) -> str:
        """Ids back to text. Non-UTF-8 byte runs raise if ``strict`` else become U+FFFD."""
        data = self.decode_bytes(ids)
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError:
            if strict:
                raise
            log.warning("decoded bytes are not valid UTF-8; replacement characters inserted")
            return data.decode("utf-8", errors="replace")

    # -- persistence ----------------------------------------------------------

    def to_json(self) -> str:
        vocab = dict(sorted(self.vocab.items(), key=lambda kv: kv[1]))
        return json.dumps(
            {"vocab": vocab, "merges": [f"{a} {b}" for a, b in self.merges], "specials": self.specials},
            ensure_ascii=False,
            indent=None,
        )

    def save(self, path: str | Path) -> None:
        with atomic_open(path) as f:
            f.write(self.to_json())
            f.write("\n")

    @classmethod
    def from_json(cls, s: str) -> "Tokenizer":
        obj = json.loads(s)
        try:
            merges = []
            for m in obj["merges"]:
                a, b = m.split(" ")
                merges.append((a, b))
            return cls(obj["vocab"], merges, obj["specials"])
        except (KeyError, ValueError, TypeError) as e:
            raise TokenizerError(f"malformed tokenizer file: {e}") from e

    @classmethod
    def load(cls, path: str | Path) -> "Tokenizer":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))
