"""Zero-shot multiple-choice and label-classification evaluation."""

from __future__ import annotations

import csv
import io
import json
import logging
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ..tokenizer import Tokenizer
from .scoring import ContextOverflow, ScoringModel, score_candidate

log = logging.getLogger(__name__)

DEFAULT_MC_TEMPLATE = "«{context}»\n{question}\n"
DEFAULT_MC_NO_CONTEXT_TEMPLATE = "{question}\n"
DEFAULT_CLS_TEMPLATE = "{text}\n"


class TaskConfigError(ValueError):
    pass


class ItemError(ValueError):
    pass


@dataclass(frozen=True)
class MCItem:
    id: str
    question: str
    choices: tuple[str, ...]
    gold: int
    context: str = ""

    def __post_init__(self):
        if len(self.choices) < 2:
            raise ItemError(f"{self.id}: need at least 2 choices")
        if any(not isinstance(c, str) or not c for c in self.choices):
            raise ItemError(f"{self.id}: choices must be non-empty strings")
        if not isinstance(self.gold, int) or isinstance(self.gold, bool) or not 0 <= self.gold < len(self.choices):
            raise ItemError(f"{self.id}: gold index {self.gold!r} out of range")


@dataclass(frozen=True)
class ClsItem:
    id: str
    text: str
    gold_label: str


@dataclass(frozen=True)
class TaskConfig:
    name: str
    kind: str = "mc"
    template: str | None = None
    context_free_template: str = DEFAULT_MC_NO_CONTEXT_TEMPLATE
    separator: str = ""
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("mc", "classification"):
            raise TaskConfigError(f"unknown task kind {self.kind!r}")
        if self.template is None:
            object.__setattr__(self, "template", DEFAULT_MC_TEMPLATE if self.kind == "mc" else DEFAULT_CLS_TEMPLATE)
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.kind == "classification":
            check_labels(self.labels)
            _check_fields(self.template, {"text"})
        else:
            _check_fields(self.template, {"context", "question"})
            _check_fields(self.context_free_template, {"question"})

    @classmethod
    def from_dict(cls, d: dict) -> "TaskConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise TaskConfigError(f"unknown task config keys: {sorted(unknown)}")
        if "name" not in d:
            raise TaskConfigError("task config needs a name")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "TaskConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def render_mc(self, item: MCItem) -> str:
        if item.context:
            return self.template.format(context=item.context, question=item.question) + self.separator
        return self.context_free_template.format(question=item.question) + self.separator

    def render_cls(self, item: ClsItem) -> str:
        return self.template.format(text=item.text) + self.separator


def _check_fields(template: str, allowed: set[str]) -> None:
    try:
        names = {f for _, f, _, _ in string.Formatter().parse(template) if f is not None}
    except ValueError as e:
        raise TaskConfigError(f"bad template {template!r}: {e}") from None
    if names - allowed:
        raise TaskConfigError(f"template uses unknown fields {sorted(names - allowed)}; allowed {sorted(allowed)}")


def check_labels(labels: Sequence[str]) -> None:
    if len(labels) < 2:
        raise TaskConfigError("need at least 2 labels")
    if len(set(labels)) != len(labels):
        raise TaskConfigError("duplicate label strings")
    if any(not isinstance(lbl, str) or not lbl for lbl in labels):
        raise TaskConfigError("labels must be non-empty strings")


@dataclass
class ItemTrace:
    id: str
    scores: list[float]
    predicted: int
    correct: bool


@dataclass
class EvalReport:
    task: str
    model: str
    n_items: int = 0
    n_correct: int = 0
    random_baseline: float = 0.0
    param_count: int | None = None
    per_item: list[ItemTrace] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n_items if self.n_items else 0.0

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "model": self.model,
            "param_count": self.param_count,
            "n_items": self.n_items,
            "n_correct": self.n_correct,
            "accuracy": self.accuracy,
            "random_baseline": self.random_baseline,
            "n_skipped": len(self.skipped),
            "skipped": self.skipped,
            "per_item": [asdict(t) for t in self.per_item],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        rep = cls(d["task"], d["model"], d["n_items"], d["n_correct"], d["random_baseline"], d.get("param_count"))
        rep.per_item = [ItemTrace(**t) for t in d.get("per_item", [])]
        rep.skipped = list(d.get("skipped", []))
        if abs(rep.accuracy - d["accuracy"]) > 1e-12:
            raise ValueError("report accuracy does not equal n_correct / n_items")
        return rep


def argmax_first(scores: Sequence[float]) -> int:
    """Index of the maximum, lowest index on ties."""
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best]:
            best = i
    return best


def _score_all(model, tok, prompt, candidates):
    return [score_candidate(model, tok, prompt, c) for c in candidates]


def _run(model, tok, jobs, report: EvalReport, workers: int) -> EvalReport:
    """jobs: (item_id, prompt, candidates, gold_index) or (item_id, error message)."""
    jobs = list(jobs)

    def one(job):
        if len(job) == 2:
            return job[0], None, job[1]
        item_id, prompt, cands, gold = job
        try:
            return item_id, (_score_all(model, tok, prompt, cands), gold), None
        except ContextOverflow as e:
            return item_id, None, f"context overflow: {e}"
        except ValueError as e:
            return item_id, None, str(e)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(one, jobs))
    else:
        results = [one(j) for j in jobs]

    baselines = []
    for item_id, scored, err in results:
        if err is not None:
            report.skipped.append({"id": item_id, "reason": err})
            log.warning("item %s skipped: %s", item_id, err)
            continue
        scores, gold = scored
        pred = argmax_first(scores)
        report.n_items += 1
        report.n_correct += int(pred == gold)
        baselines.append(1.0 / len(scores))
        report.per_item.append(ItemTrace(item_id, scores, pred, pred == gold))
    if baselines:
        first = baselines[0]
        report.random_baseline = first if all(b == first for b in baselines) else sum(baselines) / len(baselines)
    return report


def evaluate_mc(model: ScoringModel, tok: Tokenizer, items: Iterable, task: TaskConfig | None = None,
                model_name: str = "model", workers: int = 1) -> EvalReport:
    """Score every choice, predict the argmax; ``items`` may contain ItemError entries."""
    task = task or TaskConfig("mc")
    jobs = []
    for it in items:
        if isinstance(it, ItemError):
            jobs.append((getattr(it, "item_id", "?"), str(it)))
        else:
            jobs.append((it.id, task.render_mc(it), list(it.choices), it.gold))
    return _run(model, tok, jobs, EvalReport(task.name, model_name), workers)


def evaluate_classification(model: ScoringModel, tok: Tokenizer, items: Iterable, labels: Sequence[str],
                            task: TaskConfig | None = None, model_name: str = "model",
                            workers: int = 1) -> EvalReport:
    labels = list(labels)
    check_labels(labels)
    task = task or TaskConfig("classification", kind="classification", labels=tuple(labels))
    index = {lbl: i for i, lbl in enumerate(labels)}
    jobs = []
    for it in items:
        if isinstance(it, ItemError):
            jobs.append((getattr(it, "item_id", "?"), str(it)))
        elif it.gold_label not in index:
            jobs.append((it.id, f"gold label {it.gold_label!r} not in label set"))
        else:
            jobs.append((it.id, task.render_cls(it), labels, index[it.gold_label]))
    report = _run(model, tok, jobs, EvalReport(task.name, model_name), workers)
    report.random_baseline = 1.0 / len(labels)
    return report


def _item_error(item_id, msg) -> ItemError:
    e = ItemError(msg)
    e.item_id = item_id
    return e


def read_mc_jsonl(path: str | Path) -> list:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                out.append(MCItem(str(d["id"]), d["question"], tuple(d["choices"]), d["gold"], d.get("context") or ""))
            except (json.JSONDecodeError, KeyError, TypeError, ItemError) as e:
                out.append(_item_error(f"line {lineno}", f"malformed item: {e}"))
    return out


def read_cls_jsonl(path: str | Path) -> list:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                if not isinstance(d["text"], str) or not isinstance(d["label"], str):
                    raise TypeError("text and label must be strings")
                out.append(ClsItem(str(d["id"]), d["text"], d["label"]))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                out.append(_item_error(f"line {lineno}", f"malformed item: {e}"))
    return out


SCALING_FIELDS = ("params", "task", "accuracy", "baseline")


def scaling_report(entries: Sequence[tuple[int, EvalReport]]) -> str:
    """CSV of params vs accuracy, ascending by params; equal counts keep input order."""
    if not entries:
        raise ValueError("scaling report needs at least one entry")
    rows = sorted(enumerate(entries), key=lambda e: (e[1][0], e[0]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCALING_FIELDS)
    for _, (params, rep) in rows:
        w.writerow([params, rep.task, repr(rep.accuracy), repr(rep.random_baseline)])
    return buf.getvalue()
