from __future__ import annotations

from dataclasses import asdict, dataclass

from .bpe import Tokenizer


@dataclass(frozen=True)
class FertilityReport:
    tokenizer_name: str
    token_count: int
    word_count: int
    fertility: float

    def to_dict(self) -> dict:
        return asdict(self)


def count_words(text: str) -> int:
    """Number of maximal non-whitespace runs."""
    return len(text.split())


def fertility(tok: Tokenizer, text: str, name: str = "tokenizer") -> FertilityReport:
    """Average tokens per whitespace-separated word."""
    words = count_words(text)
    if words == 0:
        raise ValueError("fertility needs at least one non-whitespace word")
    n_tokens = len(tok.encode(text))
    return FertilityReport(name, n_tokens, words, n_tokens / words)
