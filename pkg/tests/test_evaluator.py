import csv
import io
import math

import numpy as np
import pytest

from lrlm.evaluator import (
    ClsItem,
    ContextOverflow,
    EvalReport,
    ItemError,
    MCItem,
    NumpyLM,
    TaskConfig,
    TaskConfigError,
    argmax_first,
    candidate_token_split,
    evaluate_classification,
    evaluate_mc,
    read_cls_jsonl,
    read_mc_jsonl,
    scaling_report,
    score_candidate,
)
from lrlm.model import ModelConfig, init_params
from lrlm.model.ops import log_softmax
from lrlm.tokenizer import Tokenizer

from scorers import TOK, V, GoldAware, Shifted, Table, Uniform


@pytest.fixture(scope="module")
def mc_items(fixtures_dir):
    items = read_mc_jsonl(fixtures_dir / "mc_20.jsonl")
    assert len(items) == 20 and all(isinstance(i, MCItem) for i in items)
    return items


@pytest.fixture(scope="module")
def mc_task(fixtures_dir):
    return TaskConfig.load(fixtures_dir / "tasks" / "mc.json")


def gold_sequences(items, task):
    return [candidate_token_split(TOK, task.render_mc(it), it.choices[it.gold])[0] for it in items]


# -- scoring ------------------------------------------------------------------


def test_uniform_scores_are_length_free():
    for cand in ["a", " ab", " абв", " Қазақстан Республикасы"]:
        assert abs(score_candidate(Uniform(), TOK, "Сұрақ: ", cand) + math.log(V)) < 1e-9


def test_certain_candidate_scores_zero():
    full, n = candidate_token_split(TOK, "ab", "c")
    assert full == [TOK.eot_id, 97, 98, 99] and n == 3
    model = Table({2: (99, 1000.0)})
    assert score_candidate(model, TOK, "ab", "c") == 0.0


def test_stepwise_probabilities():
    # P(target) = e^a / (e^a + 256) at each scored position
    model = Table({2: (ord("c"), math.log(256)), 3: (ord("d"), math.log(256 / 3))})
    got = score_candidate(model, TOK, "ab", "cd")
    assert abs(got - (math.log(0.5) + math.log(0.25)) / 2) < 1e-12
    assert round(got, 4) == -1.0397


def test_split_handles_boundary_merge():
    tok = Tokenizer.from_merges([("a", "b")])
    # "a" + "b" merges across the boundary; the candidate span starts at the divergence
    full, n = candidate_token_split(tok, "xa", "b")
    assert [tok.id_to_token[i] for i in full[n:]] == ["ab"]


def test_empty_candidate_and_overflow():
    with pytest.raises(ValueError):
        score_candidate(Uniform(), TOK, "p", "")
    small = Uniform()
    small.context_len = 4
    with pytest.raises(ContextOverflow):
        score_candidate(small, TOK, "long prompt", "x")


def test_probabilities_sum_to_one():
    cfg = ModelConfig(vocab_size=V, n_layers=1, hidden=16, n_heads=2, intermediate=24, context_len=64)
    lm = NumpyLM(init_params(cfg, seed=0, std=0.5), cfg)
    ids, _ = candidate_token_split(TOK, "Қазақ тілі", " бай")
    p = np.exp(log_softmax(lm.logits(ids).astype(np.float64)))
    assert np.allclose(p.sum(-1), 1.0, atol=1e-12)


# -- multiple choice ----------------------------------------------------------


def test_oracle_and_anti_oracle(mc_items, mc_task):
    gold = gold_sequences(mc_items, mc_task)
    assert evaluate_mc(GoldAware(gold), TOK, mc_items, mc_task).accuracy == 1.0
    assert evaluate_mc(GoldAware(gold, -1.0), TOK, mc_items, mc_task).accuracy == 0.0


def test_uniform_ties_pick_first(mc_items, mc_task):
    rep = evaluate_mc(Uniform(), TOK, mc_items, mc_task)
    assert all(t.predicted == 0 for t in rep.per_item)
    assert rep.accuracy == sum(it.gold == 0 for it in mc_items) / 20 == 0.25
    assert rep.random_baseline == 0.25


def test_shift_invariance(mc_items, mc_task):
    cfg = ModelConfig(vocab_size=V, n_layers=1, hidden=16, n_heads=2, intermediate=24, context_len=512)
    lm = NumpyLM(init_params(cfg, seed=1, dtype=np.float64, std=0.5), cfg)
    base = evaluate_mc(lm, TOK, mc_items[:6], mc_task)
    shifted = evaluate_mc(Shifted(lm, 123.0), TOK, mc_items[:6], mc_task)
    assert [t.predicted for t in base.per_item] == [t.predicted for t in shifted.per_item]


def test_deterministic_and_threaded(mc_items, mc_task):
    gold = gold_sequences(mc_items, mc_task)
    a = evaluate_mc(GoldAware(gold), TOK, mc_items, mc_task).to_dict()
    b = evaluate_mc(GoldAware(gold), TOK, mc_items, mc_task, workers=4).to_dict()
    assert a == b


def test_context_overflow_is_skipped(mc_items, mc_task):
    small = Uniform()
    small.context_len = 60
    rep = evaluate_mc(small, TOK, mc_items, mc_task)
    assert rep.skipped and rep.n_items + len(rep.skipped) == 20
    assert all("context overflow" in s["reason"] for s in rep.skipped)


def test_templates(mc_task):
    with_ctx = MCItem("a", "Q?", ("x", "y"), 1, context="C.")
    no_ctx = MCItem("b", "Q?", ("x", "y"), 0)
    assert mc_task.render_mc(with_ctx) == "«C.»\nQ?\n"
    assert mc_task.render_mc(no_ctx) == "Q?\n"


def test_item_validation(tmp_path):
    with pytest.raises(ItemError):
        MCItem("x", "q", ("a",), 0)
    with pytest.raises(ItemError):
        MCItem("x", "q", ("a", "b"), 2)
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id": "1", "question": "q", "choices": ["a", "b"], "gold": 0}\nnot json\n'
                 '{"id": "3", "question": "q", "choices": ["a", "b"], "gold": 5}\n', encoding="utf-8")
    items = read_mc_jsonl(p)
    assert isinstance(items[0], MCItem) and all(isinstance(i, ItemError) for i in items[1:])
    rep = evaluate_mc(Uniform(), TOK, items)
    assert rep.n_items == 1 and len(rep.skipped) == 2


# -- classification -----------------------------------------------------------


@pytest.fixture(scope="module")
def topic(fixtures_dir):
    return TaskConfig.load(fixtures_dir / "tasks" / "topic.json"), read_cls_jsonl(fixtures_dir / "cls_7.jsonl")


def test_classification_oracle_and_baseline(topic):
    task, items = topic
    labels = list(task.labels)
    gold = [candidate_token_split(TOK, task.render_cls(it), it.gold_label)[0] for it in items]
    rep = evaluate_classification(GoldAware(gold), TOK, items, labels, task)
    assert rep.accuracy == 1.0 and rep.n_items == 7
    assert rep.random_baseline == 1 / 7 and round(rep.random_baseline, 4) == 0.1429


def test_classification_label_errors(topic):
    task, items = topic
    with pytest.raises(TaskConfigError):
        evaluate_classification(Uniform(), TOK, items, ["a", "a", "b"])
    with pytest.raises(TaskConfigError):
        evaluate_classification(Uniform(), TOK, items, ["only"])
    extra = items + [ClsItem("zz", "мәтін", "белгісіз")]
    rep = evaluate_classification(Uniform(), TOK, extra, list(task.labels), task)
    assert rep.n_items == 7 and rep.skipped[0]["id"] == "zz"


def test_task_config_errors(tmp_path):
    with pytest.raises(TaskConfigError):
        TaskConfig.from_dict({"name": "x", "kind": "essay"})
    with pytest.raises(TaskConfigError):
        TaskConfig.from_dict({"name": "x", "kind": "mc", "template": "{nope}"})
    with pytest.raises(TaskConfigError):
        TaskConfig.from_dict({"name": "x", "kind": "classification", "template": "{text", "labels": ["a", "b"]})
    with pytest.raises(TaskConfigError):
        TaskConfig.from_dict({"kind": "mc"})


# -- reports ------------------------------------------------------------------


def test_argmax_first():
    assert argmax_first([1.0, 3.0, 3.0]) == 1
    assert argmax_first([-2.0, -2.0]) == 0


def test_report_roundtrip():
    rep = EvalReport("t", "m", 4, 3, 0.25, 1000)
    back = EvalReport.from_dict(rep.to_dict())
    assert back == rep and back.accuracy == 0.75
    bad = rep.to_dict()
    bad["accuracy"] = 0.5
    with pytest.raises(ValueError):
        EvalReport.from_dict(bad)


def test_scaling_report_order():
    reps = [(300, EvalReport("a", "m3", 4, 2, 0.25)), (50, EvalReport("a", "m1", 4, 1, 0.25)),
            (150, EvalReport("a", "m2a", 4, 3, 0.25)), (150, EvalReport("b", "m2b", 4, 4, 0.25))]
    rows = list(csv.reader(io.StringIO(scaling_report(reps))))
    assert rows[0] == ["params", "task", "accuracy", "baseline"]
    assert [(r[0], r[1]) for r in rows[1:]] == [("50", "a"), ("150", "a"), ("150", "b"), ("300", "a")]
    assert len(list(csv.reader(io.StringIO(scaling_report(reps[:1]))))) == 2
    with pytest.raises(ValueError):
        scaling_report([])
