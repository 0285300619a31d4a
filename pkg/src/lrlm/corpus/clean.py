"""Per-document text transforms and keep/reject filters.

Every function here is pure and works on a single string, so the stages can
be fanned out over worker processes without coordination.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field

# Kazakh-specific Cyrillic letters, upper and lower case.
KAZAKH_MARKERS = "ӘҒҚҢӨҰҮҺІәғқңөұүһі"

SCRIPT_RANGES: dict[str, tuple[tuple[int, int], ...]] = {
    "cyrillic": (
        (0x0400, 0x04FF),
        (0x0500, 0x052F),
        (0x1C80, 0x1C8F),
        (0x2DE0, 0x2DFF),
        (0xA640, 0xA69F),
    ),
    "latin": (
        (0x0041, 0x005A),
        (0x0061, 0x007A),
        (0x00C0, 0x024F),
        (0x1E00, 0x1EFF),
    ),
}

_URL_RE = re.compile(r"https?://|www\.", re.IGNORECASE)
_TAG_RE = re.compile(r"</?[A-Za-z][^>]{0,100}>")
_HSPACE_RE = re.compile(r"[^\S\n]+")
_NEWLINES_RE = re.compile(r"\n{3,}")
_SPACE_AROUND_NL_RE = re.compile(r" ?\n ?")


@dataclass(frozen=True)
class StageConfig:
    min_length_chars: int = 50
    max_urls_per_1000_chars: float = 5.0
    max_html_tags: int = 5
    min_language_script_ratio: float = 0.7
    min_language_marker_ratio: float = 0.02
    target_script: str = "cyrillic"
    marker_letters: str = KAZAKH_MARKERS
    _marker_set: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.min_length_chars < 1:
            raise ValueError("min_length_chars must be >= 1")
        if self.max_urls_per_1000_chars < 0:
            raise ValueError("max_urls_per_1000_chars must be >= 0")
        if self.max_html_tags < 0:
            raise ValueError("max_html_tags must be >= 0")
        for name in ("min_language_script_ratio", "min_language_marker_ratio"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.target_script not in SCRIPT_RANGES:
            raise ValueError(f"unknown target_script {self.target_script!r}")
        object.__setattr__(self, "_marker_set", frozenset(self.marker_letters))

    @classmethod
    def from_dict(cls, d: dict) -> "StageConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__ and not k.startswith("_")}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown stage config keys: {sorted(unknown)}")
        return cls(**known)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__ if not k.startswith("_")}


# -- transforms ---------------------------------------------------------------


def normalize_nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def strip_control_chars(text: str) -> str:
    """Drop category-Cc code points, keeping newline and tab for the next stage.

    Removing a control character can leave a combining mark next to a new
    starter, so NFC input is re-composed to stay NFC.
    """
    out = "".join(ch for ch in text if ch in "\n\t" or unicodedata.category(ch) != "Cc")
    if len(out) != len(text) and unicodedata.is_normalized("NFC", text):
        out = unicodedata.normalize("NFC", out)
    return out


def collapse_whitespace(text: str) -> str:
    """Collapse horizontal whitespace runs to one space and cap newline runs at two.

    Spaces touching a newline are dropped so that the result is a fixed point
    of this function.
    """
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    text = _HSPACE_RE.sub(" ", text)
    text = _SPACE_AROUND_NL_RE.sub("\n", text)
    text = _NEWLINES_RE.sub("\n\n", text)
    return text.strip()


# -- filters ------------------------------------------------------------------


def filter_min_length(text: str, cfg: StageConfig) -> bool:
    return len(text) >= cfg.min_length_chars


def count_urls(text: str) -> int:
    return len(_URL_RE.findall(text))


def filter_url_density(text: str, cfg: StageConfig) -> bool:
    n = len(text)
    if n == 0:
        return True
    return count_urls(text) / n * 1000.0 <= cfg.max_urls_per_1000_chars


def count_html_tags(text: str) -> int:
    return len(_TAG_RE.findall(text))


def filter_html_tags(text: str, cfg: StageConfig) -> bool:
    return count_html_tags(text) <= cfg.max_html_tags


def in_script(ch: str, script: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in SCRIPT_RANGES[script])


def script_ratio(text: str, script: str) -> float | None:
    """Fraction of alphabetic code points that belong to ``script``; None if no letters."""
    letters = [ch for ch in text if ch.isalpha()]
    if not letters:
        return None
    return sum(in_script(ch, script) for ch in letters) / len(letters)


def filter_script_ratio(text: str, cfg: StageConfig) -> bool:
    ratio = script_ratio(text, cfg.target_script)
    return ratio is not None and ratio >= cfg.min_language_script_ratio


def marker_ratio(text: str, cfg: StageConfig) -> float:
    script_letters = [ch for ch in text if ch.isalpha() and in_script(ch, cfg.target_script)]
    if not script_letters:
        return 0.0
    markers = cfg._marker_set
    return sum(ch in markers for ch in script_letters) / len(script_letters)


def filter_language_id(text: str, cfg: StageConfig) -> bool:
    if not cfg.marker_letters:
        return True
    return marker_ratio(text, cfg) >= cfg.min_language_marker_ratio


TRANSFORMS = (
    ("nfc", normalize_nfc),
    ("control_chars", strip_control_chars),
    ("whitespace", collapse_whitespace),
)

FILTERS = (
    ("min_length", filter_min_length),
    ("url_density", filter_url_density),
    ("html_tags", filter_html_tags),
    ("script_ratio", filter_script_ratio),
    ("language_id", filter_language_id),
)


def clean_text(text: str, cfg: StageConfig) -> tuple[str, str | None]:
    """Run transforms then filters. Returns (text, name of rejecting stage or None)."""
    for _, fn in TRANSFORMS:
        text = fn(text)
    for name, keep in FILTERS:
        if not keep(text, cfg):
            return text, name
    return text, None
