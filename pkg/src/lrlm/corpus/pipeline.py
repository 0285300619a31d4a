"""Nine-stage cleaning pipeline over JSON Lines corpora."""

from __future__ import annotations

import json
import logging
import multiprocessing as mp
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Iterable, Iterator

from .clean import FILTERS, StageConfig, clean_text
from .dedup import HashSet, dedup

log = logging.getLogger(__name__)

STAGES = ("nfc", "control_chars", "whitespace") + tuple(n for n, _ in FILTERS) + ("dedup",)
REJECTING_STAGES = tuple(n for n, _ in FILTERS) + ("dedup",)


@dataclass(frozen=True)
class Document:
    id: str
    source: str
    text: str

    def to_json(self) -> str:
        return json.dumps({"id": self.id, "source": self.source, "text": self.text}, ensure_ascii=False)


@dataclass(frozen=True)
class IngestionError:
    """A corpus line that could not be turned into a Document."""

    line: int
    reason: str


@dataclass
class PipelineReport:
    input_count: int = 0
    per_stage_rejections: dict[str, int] = field(default_factory=lambda: {s: 0 for s in REJECTING_STAGES})
    ingestion_errors: int = 0
    output_count: int = 0

    @property
    def pass_rate(self) -> float:
        return self.output_count / self.input_count if self.input_count else 0.0

    def check(self) -> None:
        total = self.output_count + sum(self.per_stage_rejections.values()) + self.ingestion_errors
        if total != self.input_count:
            raise AssertionError(f"accounting mismatch: {total} != {self.input_count}")

    def to_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "per_stage_rejections": dict(self.per_stage_rejections),
            "ingestion_errors": self.ingestion_errors,
            "output_count": self.output_count,
            "pass_rate": self.pass_rate,
        }


def parse_line(raw: bytes, lineno: int) -> Document | IngestionError:
    try:
        obj = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as e:
        return IngestionError(lineno, f"invalid UTF-8: {e}")
    except json.JSONDecodeError as e:
        return IngestionError(lineno, f"invalid JSON: {e}")
    if not isinstance(obj, dict):
        return IngestionError(lineno, "record is not an object")
    doc_id, source, text = obj.get("id"), obj.get("source"), obj.get("text")
    if not isinstance(doc_id, str) or not doc_id:
        return IngestionError(lineno, "missing or empty id")
    if not isinstance(source, str) or not isinstance(text, str):
        return IngestionError(lineno, "source and text must be strings")
    try:
        text.encode("utf-8")
    except UnicodeEncodeError:
        # lone surrogates from \ud800-style escapes
        return IngestionError(lineno, "text is not valid Unicode")
    return Document(doc_id, source, text)


def read_jsonl(path: str | Path) -> Iterator[Document | IngestionError]:
    """Stream records from a corpus file; bad lines come out as IngestionError."""
    seen_ids: set[str] = set()
    with open(path, "rb") as f:
        for lineno, raw in enumerate(f, 1):
            if not raw.strip():
                continue
            rec = parse_line(raw, lineno)
            if isinstance(rec, Document):
                if rec.id in seen_ids:
                    rec = IngestionError(lineno, f"duplicate id {rec.id!r}")
                else:
                    seen_ids.add(rec.id)
            yield rec


def write_jsonl(f, docs: Iterable[Document]) -> int:
    n = 0
    for doc in docs:
        f.write(doc.to_json())
        f.write("\n")
        n += 1
    return n


def _clean_record(rec, cfg: StageConfig):
    if isinstance(rec, IngestionError):
        return rec, None
    text, rejected = clean_text(rec.text, cfg)
    return Document(rec.id, rec.source, text), rejected


class Pipeline:
    """Stateful runner: iterate ``run`` to stream survivors, read ``report`` afterwards.

    Stages 1-8 run in ``workers`` processes; results are consumed in input
    order and the dedup stage runs in the calling process.
    """

    def __init__(self, cfg: StageConfig | None = None, reference: HashSet | None = None, workers: int = 1):
        self.cfg = cfg or StageConfig()
        self.reference = reference
        self.workers = max(1, int(workers))
        self.report = PipelineReport()

    def _cleaned(self, records: Iterable) -> Iterator[Document]:
        fn = partial(_clean_record, cfg=self.cfg)
        if self.workers == 1:
            results = map(fn, records)
            pool = None
        else:
            pool = mp.get_context("spawn").Pool(self.workers)
            # imap preserves input order
            results = pool.imap(fn, records, chunksize=64)
        try:
            for rec, rejected in results:
                self.report.input_count += 1
                if isinstance(rec, IngestionError):
                    self.report.ingestion_errors += 1
                    log.warning("line %d skipped: %s", rec.line, rec.reason)
                elif rejected is not None:
                    self.report.per_stage_rejections[rejected] += 1
                else:
                    yield rec
        finally:
            if pool is not None:
                pool.terminate()

    def run(self, records: Iterable[Document | IngestionError]) -> Iterator[Document]:
        stats: dict[str, int] = {}
        for doc in dedup(self._cleaned(records), self.reference, stats=stats):
            self.report.output_count += 1
            yield doc
        self.report.per_stage_rejections["dedup"] += stats.get("dedup", 0)
        self.report.check()


def run_pipeline(records: Iterable[Document | IngestionError], cfg: StageConfig | None = None,
                 reference: HashSet | None = None, workers: int = 1) -> tuple[list[Document], PipelineReport]:
    pipe = Pipeline(cfg, reference, workers)
    out = list(pipe.run(records))
    return out, pipe.report
