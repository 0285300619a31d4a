"""Llama-style decoder: forward pass with an activation tape and exact backward."""

from __future__ import annotations

from typing import Dict

import numpy as np

from .config import ModelConfig
from .ops import (
    attention_bwd,
    attention_fwd,
    log_softmax,
    rms_norm_bwd,
    rms_norm_fwd,
    rope_apply,
    rope_bwd,
    rope_tables,
    softmax,
    swiglu_bwd,
    swiglu_fwd,
)

Params = Dict[str, np.ndarray]

LAYER_KEYS = ("attn_norm", "wq", "wk", "wv", "wo", "ffn_norm", "w_gate", "w_up", "w_down")


class ForwardError(ValueError):
    pass


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    h, kv, inter = cfg.hidden, cfg.kv_dim, cfg.intermediate
    shapes: dict[str, tuple[int, ...]] = {"tok_emb": (cfg.vocab_size, h)}
    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        shapes.update({
            p + "attn_norm": (h,),
            p + "wq": (h, h),
            p + "wk": (h, kv),
            p + "wv": (h, kv),
            p + "wo": (h, h),
            p + "ffn_norm": (h,),
            p + "w_gate": (h, inter),
            p + "w_up": (h, inter),
            p + "w_down": (inter, h),
        })
    shapes["final_norm"] = (h,)
    return shapes


def is_norm(name: str) -> bool:
    return name.endswith("norm")


def init_params(cfg: ModelConfig, seed: int = 0, dtype=np.float32, std: float = 0.02) -> Params:
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if is_norm(name):
            params[name] = np.ones(shape, dtype=dtype)
        else:
            params[name] = rng.normal(0.0, std, size=shape).astype(dtype)
    return params


def check_params(params: Params, cfg: ModelConfig) -> None:
    shapes = param_shapes(cfg)
    if set(params) != set(shapes):
        missing = sorted(set(shapes) - set(params))
        extra = sorted(set(params) - set(shapes))
        raise ForwardError(f"parameter names mismatch; missing={missing} extra={extra}")
    for name, shape in shapes.items():
        if params[name].shape != shape:
            raise ForwardError(f"{name}: shape {params[name].shape} != {shape}")


def forward(params: Params, ids, cfg: ModelConfig, keep_tape: bool = True):
    """Logits for every position of ``ids`` ((T,) or (B, T)), plus the tape.

    Returns ``(logits, tape)``; logits have shape ids.shape + (vocab_size,).
    """
    ids = np.asarray(ids)
    squeeze = ids.ndim == 1
    if squeeze:
        ids = ids[None, :]
    if ids.ndim != 2:
        raise ForwardError(f"ids must be 1-D or 2-D, got shape {ids.shape}")
    b, t = ids.shape
    if t > cfg.context_len:
        raise ForwardError(f"sequence length {t} exceeds context_len {cfg.context_len}")
    if t == 0:
        raise ForwardError("empty sequence")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise ForwardError("token id out of range")

    emb = params["tok_emb"]
    dtype = emb.dtype
    nh, nkv, hd = cfg.n_heads, cfg.n_kv_heads, cfg.head_dim
    cos, sin = rope_tables(t, hd, cfg.rope_base, dtype)
    x = emb[ids]
    tape: dict = {"ids": ids, "squeeze": squeeze, "cos": cos, "sin": sin, "layers": []}

    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        h, c_an = rms_norm_fwd(x, params[p + "attn_norm"], cfg.norm_eps)
        q = (h @ params[p + "wq"]).reshape(b, t, nh, hd).transpose(0, 2, 1, 3)
        k = (h @ params[p + "wk"]).reshape(b, t, nkv, hd).transpose(0, 2, 1, 3)
        v = (h @ params[p + "wv"]).reshape(b, t, nkv, hd).transpose(0, 2, 1, 3)
        q = rope_apply(q, cos, sin)
        k = rope_apply(k, cos, sin)
        o, c_att = attention_fwd(q, k, v)
        o = o.transpose(0, 2, 1, 3).reshape(b, t, cfg.hidden)
        x = x + o @ params[p + "wo"]

        h2, c_fn = rms_norm_fwd(x, params[p + "ffn_norm"], cfg.norm_eps)
        f, c_ffn = swiglu_fwd(h2, params[p + "w_gate"], params[p + "w_up"], params[p + "w_down"])
        x = x + f
        if keep_tape:
            tape["layers"].append({"attn_norm": c_an, "h": h, "attn": c_att, "o": o,
                                   "ffn_norm": c_fn, "ffn": c_ffn})

    xf, c_final = rms_norm_fwd(x, params["final_norm"], cfg.norm_eps)
    logits = xf @ emb.T
    if keep_tape:
        tape["final_norm"] = c_final
        tape["xf"] = xf
    if squeeze:
        logits = logits[0]
    return logits, (tape if keep_tape else None)


def logits_fn(params: Params, cfg: ModelConfig):
    return lambda ids: forward(params, ids, cfg, keep_tape=False)[0]


def cross_entropy(logits, targets) -> float:
    """Mean negative log-likelihood of ``targets`` (max-shifted log-softmax)."""
    logits = np.asarray(logits)
    targets = np.asarray(targets)
    lp = log_softmax(logits.reshape(-1, logits.shape[-1]))
    return float(-np.mean(lp[np.arange(lp.shape[0]), targets.reshape(-1)]))


def cross_entropy_grad(logits, targets, d_loss: float = 1.0):
    """d(loss)/d(logits) for the mean cross-entropy, scaled by ``d_loss``."""
    logits = np.asarray(logits)
    flat = logits.reshape(-1, logits.shape[-1])
    g = softmax(flat)
    g[np.arange(flat.shape[0]), np.asarray(targets).reshape(-1)] -= 1.0
    g *= d_loss / flat.shape[0]
    return g.reshape(logits.shape)


def backward(params: Params, cfg: ModelConfig, tape: dict, dlogits) -> Params:
    """Exact gradients of a scalar whose gradient w.r.t. logits is ``dlogits``.

    The tied embedding collects both the output-projection and the lookup
    contributions.
    """
    if tape is None or "xf" not in tape:
        raise ValueError("backward needs a tape from forward(keep_tape=True)")
    ids = tape["ids"]
    dlogits = np.asarray(dlogits)
    if tape["squeeze"]:
        dlogits = dlogits[None]
    b, t = ids.shape
    nh, hd = cfg.n_heads, cfg.head_dim
    cos, sin = tape["cos"], tape["sin"]
    emb = params["tok_emb"]
    grads: Params = {}

    xf = tape["xf"]
    flat_dl = dlogits.reshape(-1, cfg.vocab_size)
    d_emb = flat_dl.T @ xf.reshape(-1, cfg.hidden)
    dxf = dlogits @ emb
    dx, grads["final_norm"] = rms_norm_bwd(dxf, tape["final_norm"])

    for i in reversed(range(cfg.n_layers)):
        p = f"layers.{i}."
        L = tape["layers"][i]
        # ffn residual branch
        dh2, grads[p + "w_gate"], grads[p + "w_up"], grads[p + "w_down"] = swiglu_bwd(
            dx, L["ffn"], params[p + "w_gate"], params[p + "w_up"], params[p + "w_down"])
        dxn, grads[p + "ffn_norm"] = rms_norm_bwd(dh2, L["ffn_norm"])
        dx = dx + dxn
        # attention residual branch
        o = L["o"]
        grads[p + "wo"] = o.reshape(-1, cfg.hidden).T @ dx.reshape(-1, cfg.hidden)
        do = (dx @ params[p + "wo"].T).reshape(b, t, nh, hd).transpose(0, 2, 1, 3)
        dq, dk, dv = attention_bwd(do, L["attn"])
        dq = rope_bwd(dq, cos, sin)
        dk = rope_bwd(dk, cos, sin)
        dq = dq.transpose(0, 2, 1, 3).reshape(b * t, cfg.hidden)
        dk = dk.transpose(0, 2, 1, 3).reshape(b * t, cfg.kv_dim)
        dv = dv.transpose(0, 2, 1, 3).reshape(b * t, cfg.kv_dim)
        h = L["h"].reshape(b * t, cfg.hidden)
        grads[p + "wq"] = h.T @ dq
        grads[p + "wk"] = h.T @ dk
        grads[p + "wv"] = h.T @ dv
        dh = dq @ params[p + "wq"].T + dk @ params[p + "wk"].T + dv @ params[p + "wv"].T
        dxn, grads[p + "attn_norm"] = rms_norm_bwd(dh.reshape(b, t, cfg.hidden), L["attn_norm"])
        dx = dx + dxn

    np.add.at(d_emb, ids.reshape(-1), dx.reshape(-1, cfg.hidden))
    grads["tok_emb"] = d_emb
    return {name: grads[name] for name in params}


def loss_and_grads(params: Params, ids, targets, cfg: ModelConfig, d_loss: float = 1.0):
    logits, tape = forward(params, ids, cfg)
    loss = cross_entropy(logits, targets)
    grads = backward(params, cfg, tape, cross_entropy_grad(logits, targets, d_loss))
    return loss, grads
