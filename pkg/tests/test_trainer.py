import csv
import math

import numpy as np
import pytest

from lrlm.model import ModelConfig, init_params, load_preset
from lrlm.trainer import (
    TRACE_FIELDS,
    NonFiniteError,
    OptimizerConfig,
    OptimizerState,
    TrainingAborted,
    adamw_step,
    batch_indices,
    clip_gradients,
    global_norm,
    load_training_state,
    lr_at_step,
    tokens_per_parameter,
    train,
    write_trace,
)
from oracles import adamw_scalar_oracle

# -- schedule -----------------------------------------------------------------


def test_schedule_points():
    cfg = OptimizerConfig(peak_lr=1e-3, min_lr=1e-4, warmup_steps=100, total_steps=1100)
    assert lr_at_step(0, cfg) == 0.0
    assert lr_at_step(100, cfg) == 1e-3
    assert abs(lr_at_step(600, cfg) - 5.5e-4) < 1e-15
    assert abs(lr_at_step(1100, cfg) - 1e-4) < 1e-15
    assert lr_at_step(50, cfg) == 5e-4
    with pytest.raises(ValueError):
        lr_at_step(1101, cfg)
    with pytest.raises(ValueError):
        lr_at_step(-1, cfg)


def test_schedule_continuous_and_monotone():
    cfg = OptimizerConfig(peak_lr=3e-4, warmup_steps=37, total_steps=500)
    lrs = [lr_at_step(s, cfg) for s in range(501)]
    assert all(a <= b for a, b in zip(lrs[:38], lrs[1:38]))
    assert all(a >= b for a, b in zip(lrs[37:], lrs[38:]))
    # left and right limits at the warmup boundary agree to first order
    assert abs(lrs[37] - lrs[36]) <= 3e-4 / 37 + 1e-15 and abs(lrs[38] - lrs[37]) < 1e-7


def test_optimizer_defaults_and_validation():
    cfg = OptimizerConfig(peak_lr=6e-4, total_steps=5000)
    assert cfg.min_lr == pytest.approx(6e-5) and cfg.warmup_steps == 50
    assert OptimizerConfig(total_steps=5).warmup_steps == 5
    with pytest.raises(ValueError):
        OptimizerConfig(warmup_steps=0)
    with pytest.raises(ValueError):
        OptimizerConfig(peak_lr=1e-4, min_lr=1e-3)
    with pytest.raises(ValueError):
        OptimizerConfig.from_dict({"lr": 1.0})
    assert OptimizerConfig.from_dict(cfg.to_dict()) == cfg


# -- clipping -----------------------------------------------------------------


def test_clip_examples():
    g = {"a": np.array([3.0, 0, 0]), "b": np.array([0.0, 4.0, 0])}
    assert global_norm(g) == 5.0
    two = {"a": np.array([2.0, 0.0])}
    out, n = clip_gradients(two, 1.0)
    assert n == 2.0 and np.array_equal(out["a"], [1.0, 0.0])
    half = {"a": np.array([0.3, 0.4])}
    out, n = clip_gradients(half, 1.0)
    assert n == 0.5 and np.array_equal(out["a"], half["a"])
    assert np.array_equal(two["a"], [2.0, 0.0])  # input untouched


def test_clip_contract():
    rng = np.random.default_rng(0)
    for _ in range(50):
        g = {str(i): rng.normal(scale=rng.uniform(0.01, 5), size=rng.integers(1, 20)) for i in range(3)}
        c = rng.uniform(0.1, 3)
        out, pre = clip_gradients(g, c)
        assert abs(global_norm(out) - min(pre, c)) <= 1e-6 * min(pre, c)


def test_clip_non_finite():
    with pytest.raises(NonFiniteError):
        clip_gradients({"a": np.array([1.0, np.nan])}, 1.0)
    with pytest.raises(NonFiniteError):
        clip_gradients({"a": np.array([np.inf])}, 1.0)


# -- AdamW --------------------------------------------------------------------


def test_adamw_matches_scalar_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        theta0 = rng.normal()
        grads = rng.normal(scale=rng.uniform(0.01, 10), size=20)
        lrs = rng.uniform(0, 0.1, size=20)
        b1, b2 = rng.uniform(0.5, 0.99), rng.uniform(0.9, 0.999)
        wd = rng.uniform(0, 0.2)
        cfg = OptimizerConfig(peak_lr=1.0, min_lr=0.0, total_steps=20, beta1=b1, beta2=b2, weight_decay=wd, eps=1e-8)
        params = {"w": np.array([theta0])}
        state = OptimizerState()
        for g, lr in zip(grads, lrs):
            adamw_step(params, {"w": np.array([g])}, state, cfg, lr)
        expected = adamw_scalar_oracle(theta0, list(grads), list(lrs), b1, b2, 1e-8, wd)
        assert abs(params["w"][0] - expected) < 1e-10


def test_adamw_scalar_examples():
    cfg = OptimizerConfig(peak_lr=0.1, total_steps=10, weight_decay=0.0)
    p = {"w": np.array([1.0])}
    st = OptimizerState()
    adamw_step(p, {"w": np.array([1.0])}, st, cfg, 0.1)
    assert abs(p["w"][0] - (1 - 0.1 / (1 + 1e-8))) < 1e-15 and st.step == 1

    p = {"w": np.array([2.0, -3.0])}
    st = OptimizerState()
    adamw_step(p, {"w": np.zeros(2)}, st, cfg, 0.1)
    assert np.array_equal(p["w"], [2.0, -3.0]) and st.step == 1

    cfg = OptimizerConfig(peak_lr=0.1, total_steps=10, weight_decay=0.1)
    adamw_step(p, {"w": np.zeros(2)}, st, cfg, 0.1)
    assert np.allclose(p["w"], np.array([2.0, -3.0]) * 0.99, rtol=1e-15)


def test_adamw_skips_norm_weights():
    cfg = OptimizerConfig(peak_lr=0.1, total_steps=10, weight_decay=0.5)
    p = {"layers.0.attn_norm": np.ones(3), "layers.0.wq": np.ones(3)}
    adamw_step(p, {k: np.zeros(3) for k in p}, OptimizerState(), cfg, 0.1)
    assert np.array_equal(p["layers.0.attn_norm"], np.ones(3))
    assert np.allclose(p["layers.0.wq"], 0.95)


def test_tokens_per_parameter():
    assert round(tokens_per_parameter(9.0e9, 587e6), 2) == 15.33
    assert tokens_per_parameter(20 * 12345, 12345) == 20.0
    assert tokens_per_parameter(7, 7) == 1.0
    with pytest.raises(ValueError):
        tokens_per_parameter(1, 0)


# -- batching -----------------------------------------------------------------


def test_batch_indices_cover_each_epoch():
    n, bs = 10, 4
    seen = np.concatenate([batch_indices(n, bs, 3, s) for s in range(5)])  # 20 = two epochs
    assert sorted(seen[:10]) == list(range(10)) and sorted(seen[10:]) == list(range(10))
    assert np.array_equal(batch_indices(n, bs, 3, 2), batch_indices(n, bs, 3, 2))
    assert not np.array_equal(np.concatenate([batch_indices(n, bs, 4, s) for s in range(5)]), seen)


# -- training runs ------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny():
    cfg, lr = load_preset("tiny")
    return cfg, lr


def repeated_sentence_blocks(cfg, n_blocks=50, block_len=65, seed=0):
    sent = np.random.default_rng(seed).integers(0, cfg.vocab_size, size=13)
    return np.tile(sent, n_blocks * block_len // 13 + 2)[: n_blocks * block_len].reshape(n_blocks, block_len)


def test_overfit_repeated_sentence(tiny):
    cfg, lr = tiny
    p = init_params(cfg, seed=0)
    trace = train(p, repeated_sentence_blocks(cfg), cfg, OptimizerConfig(peak_lr=lr, total_steps=200), batch_size=8)
    losses = [r.loss for r in trace]
    assert abs(losses[0] - math.log(cfg.vocab_size)) / math.log(cfg.vocab_size) < 0.05
    assert losses[-1] < 0.5
    # the 50-step moving average falls between consecutive windows
    avg = [np.mean(losses[i:i + 50]) for i in range(0, 200, 50)]
    assert all(a > b for a, b in zip(avg, avg[1:]))


def test_overfit_single_batch(tiny):
    cfg, lr = tiny
    blocks = np.random.default_rng(1).integers(0, cfg.vocab_size, size=(4, 65))
    p = init_params(cfg, seed=0)
    trace = train(p, blocks, cfg, OptimizerConfig(peak_lr=lr, total_steps=300), batch_size=4)
    assert abs(trace[0].loss - math.log(cfg.vocab_size)) / math.log(cfg.vocab_size) < 0.05
    assert min(r.loss for r in trace) < 0.1


def small_run(seed=0, steps=30, **kw):
    cfg = ModelConfig(vocab_size=40, n_layers=1, hidden=16, n_heads=2, intermediate=24, context_len=16)
    blocks = np.random.default_rng(9).integers(0, 40, size=(12, 17))
    p = init_params(cfg, seed=seed)
    opt = OptimizerConfig(peak_lr=1e-2, total_steps=steps, warmup_steps=5)
    return cfg, p, train(p, blocks, cfg, opt, batch_size=4, seed=seed, **kw), blocks, opt


def test_trace_bit_identical():
    _, p1, t1, _, _ = small_run()
    _, p2, t2, _, _ = small_run()
    assert t1 == t2
    assert all(np.array_equal(p1[k], p2[k]) for k in p1)
    _, _, t3, _, _ = small_run(seed=1)
    assert t3 != t1


def test_trace_fields(tmp_path):
    _, _, trace, _, _ = small_run(steps=12)
    assert [r.step for r in trace] == list(range(12))
    assert trace[-1].tokens_seen == 12 * 4 * 16
    write_trace(tmp_path / "t.csv", trace)
    with open(tmp_path / "t.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == TRACE_FIELDS and len(rows) == 13
    assert float(rows[5][2]) == trace[4].loss  # repr round-trips exactly


class _Interrupt(Exception):
    pass


def test_resume_matches_uninterrupted(tmp_path):
    ck = tmp_path / "run.ckpt"
    cfg, p_full, full, blocks, opt = small_run(steps=20)

    part = []

    def crash_in_step_11(rec):
        if rec.step == 10:
            raise _Interrupt  # after the step-10 checkpoint was written
        part.append(rec)

    p = init_params(cfg, seed=0)
    with pytest.raises(_Interrupt):
        train(p, blocks, cfg, opt, batch_size=4, seed=0, checkpoint_path=ck, checkpoint_every=10,
              on_step=crash_in_step_11)
    cfg2, p2, state, opt2, side = load_training_state(ck)
    assert state.step == 10 and side["seed"] == 0 and opt2 == opt
    rest = train(p2, blocks, cfg2, opt2, batch_size=4, seed=0, state=state)
    # float32 checkpoints round-trip exactly, so the continuation matches
    assert part + rest == full
    assert all(np.array_equal(p2[k], p_full[k]) for k in p2)


def test_abort_on_non_finite(tmp_path):
    cfg = ModelConfig(vocab_size=40, n_layers=1, hidden=16, n_heads=2, intermediate=24, context_len=16)
    p = init_params(cfg, seed=0)
    p["layers.0.wq"][0, 0] = np.nan
    blocks = np.random.default_rng(0).integers(0, 40, size=(4, 17))
    with pytest.raises(TrainingAborted):
        train(p, blocks, cfg, OptimizerConfig(total_steps=3), batch_size=2)


def test_train_rejects_bad_blocks(tiny):
    cfg, _ = tiny
    p = init_params(cfg)
    with pytest.raises(ValueError):
        train(p, np.zeros((0, 10), dtype=np.uint32), cfg, OptimizerConfig(total_steps=1))
    with pytest.raises(ValueError):
        train(p, np.zeros((2, cfg.context_len + 2), dtype=np.uint32), cfg, OptimizerConfig(total_steps=1))
