"""Building blocks with hand-written backward passes.

Each ``*_fwd`` returns its output and a cache; the matching ``*_bwd`` takes
the upstream gradient and that cache. Row-vector convention throughout:
a linear layer is ``x @ W`` with ``W`` shaped (in, out).
"""

from __future__ import annotations

import numpy as np


def rms_norm(x, w, eps):
    return rms_norm_fwd(x, w, eps)[0]


def rms_norm_fwd(x, w, eps):
    r = 1.0 / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + eps)
    return x * r * w, (x, w, r)


def rms_norm_bwd(dy, cache):
    x, w, r = cache
    g = dy * w
    h = x.shape[-1]
    dx = r * g - (r ** 3) * x * (np.sum(g * x, axis=-1, keepdims=True) / h)
    dw = np.sum(dy * x * r, axis=tuple(range(x.ndim - 1)))
    return dx, dw


def rope_tables(seq_len: int, head_dim: int, base: float, dtype=np.float64):
    """cos/sin tables of shape (seq_len, head_dim // 2)."""
    inv_freq = base ** (-np.arange(0, head_dim, 2, dtype=np.float64) / head_dim)
    angles = np.outer(np.arange(seq_len, dtype=np.float64), inv_freq)
    return np.cos(angles).astype(dtype), np.sin(angles).astype(dtype)


def rope_apply(x, cos, sin):
    """Rotate consecutive pairs (x[2i], x[2i+1]) of the last axis.

    ``x`` is (..., T, head_dim); ``cos``/``sin`` are (T, head_dim // 2).
    """
    xe, xo = x[..., 0::2], x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = xe * cos - xo * sin
    out[..., 1::2] = xe * sin + xo * cos
    return out


def rope_bwd(dy, cos, sin):
    # transpose of a rotation is the rotation by the negative angle
    return rope_apply(dy, cos, -sin)


def causal_mask(t: int, dtype=np.float64):
    return np.triu(np.full((t, t), -np.inf, dtype=dtype), k=1)


def softmax(z, axis=-1):
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(z, axis=-1):
    z = z - np.max(z, axis=axis, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def attention_fwd(q, k, v):
    """Causal scaled dot-product attention.

    q: (B, n_heads, T, hd); k, v: (B, n_kv_heads, T, hd). KV heads are shared
    by consecutive groups of n_heads // n_kv_heads query heads.
    """
    n_heads, n_kv = q.shape[1], k.shape[1]
    group = n_heads // n_kv
    kr = np.repeat(k, group, axis=1) if group > 1 else k
    vr = np.repeat(v, group, axis=1) if group > 1 else v
    hd = q.shape[-1]
    t = q.shape[-2]
    scale = 1.0 / np.sqrt(hd)
    scores = (q @ kr.swapaxes(-1, -2)) * scale + causal_mask(t, q.dtype)
    p = softmax(scores)
    return p @ vr, (q, kr, vr, p, scale, group)


def attention(q, k, v):
    return attention_fwd(q, k, v)[0]


def attention_bwd(dout, cache):
    q, kr, vr, p, scale, group = cache
    dv = p.swapaxes(-1, -2) @ dout
    dp = dout @ vr.swapaxes(-1, -2)
    ds = p * (dp - np.sum(dp * p, axis=-1, keepdims=True))
    dq = (ds @ kr) * scale
    dk = (ds.swapaxes(-1, -2) @ q) * scale
    if group > 1:
        b, nh, t, hd = dk.shape
        dk = dk.reshape(b, nh // group, group, t, hd).sum(axis=2)
        dv = dv.reshape(b, nh // group, group, t, hd).sum(axis=2)
    return dq, dk, dv


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def silu(z):
    return z * sigmoid(z)


def swiglu_fwd(x, w_gate, w_up, w_down):
    a = x @ w_gate
    b = x @ w_up
    s = sigmoid(a)
    g = a * s
    h = g * b
    return h @ w_down, (x, a, b, s, g, h)


def swiglu_ffn(x, w_gate, w_up, w_down):
    return swiglu_fwd(x, w_gate, w_up, w_down)[0]


def swiglu_bwd(dout, cache, w_gate, w_up, w_down):
    x, a, b, s, g, h = cache
    lead = tuple(range(x.ndim - 1))
    dw_down = np.tensordot(h, dout, axes=(lead, lead))
    dh = dout @ w_down.T
    db = dh * g
    da = dh * b * (s + a * s * (1.0 - s))
    dw_gate = np.tensordot(x, da, axes=(lead, lead))
    dw_up = np.tensordot(x, db, axes=(lead, lead))
    dx = da @ w_gate.T + db @ w_up.T
    return dx, dw_gate, dw_up, dw_down
