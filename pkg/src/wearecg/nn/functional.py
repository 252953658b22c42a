"""Fused layer kernels with hand-written backward passes.

All temporal ops take channel-first ``(batch, channels, time)`` tensors.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import Tensor, _sigmoid, make_node


def same_padding(length: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """Return ``(t_out, pad_left, pad_right)`` so that ``t_out == ceil(length / stride)``."""
    t_out = -(-length // stride)
    total = max((t_out - 1) * stride + kernel - length, 0)
    left = total // 2
    return t_out, left, total - left


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    if x.ndim != 3 or weight.ndim != 3:
        raise ValueError(f"conv1d expects 3-D input and weight, got {x.shape} and {weight.shape}")
    B, cin, T = x.shape
    cout, cin_w, k = weight.shape
    if cin != cin_w:
        raise ValueError(f"conv1d channel mismatch: input has {cin}, weight expects {cin_w}")
    if k % 2 == 0:
        raise ValueError("SAME padding needs an odd kernel size")
    if stride not in (1, 2):
        raise ValueError("stride must be 1 or 2")
    if bias is not None and bias.shape != (cout,):
        raise ValueError(f"bias shape {bias.shape} does not match {cout} output channels")

    t_out, pl, pr = same_padding(T, k, stride)
    if stride == 1:
        out, backward_x, backward_w = _conv_shift(x.data, weight.data, pl, pr)
    else:
        out, backward_x, backward_w = _conv_im2col(x.data, weight.data, stride, t_out, pl, pr)
    if bias is not None:
        out += bias.data[:, None]

    def backward(g):
        gw = backward_w(g) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2)) if bias is not None and bias.requires_grad else None
        gx = backward_x(g) if x.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out, parents, backward)


def _conv_shift(x: np.ndarray, w: np.ndarray, pl: int, pr: int):
    # stride 1: one GEMM with the taps stacked along the output axis, then shift-add
    B, cin, T = x.shape
    cout, _, k = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pl, pr))) if pl or pr else x
    stacked = w.transpose(2, 0, 1).reshape(k * cout, cin)
    y = np.matmul(stacked, xp).reshape(B, k, cout, -1)
    out = y[:, 0, :, 0:T].copy()
    for j in range(1, k):
        out += y[:, j, :, j:j + T]

    def backward_w(g):
        gw = np.empty((k, cout, cin), dtype=g.dtype)
        for j in range(k):
            gw[j] = np.matmul(g, xp[:, :, j:j + T].transpose(0, 2, 1)).sum(axis=0)
        return gw.transpose(1, 2, 0)

    def backward_x(g):
        if k == 1:
            return np.matmul(stacked.T, g)
        gy = np.zeros((B, k, cout, T + pl + pr), dtype=g.dtype)
        for j in range(k):
            gy[:, j, :, j:j + T] = g
        gxp = np.matmul(stacked.T, gy.reshape(B, k * cout, -1))
        return gxp[:, :, pl:pl + T]

    return out, backward_x, backward_w


def _conv_im2col(x: np.ndarray, w: np.ndarray, stride: int, t_out: int, pl: int, pr: int):
    B, cin, T = x.shape
    cout, _, k = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pl, pr)))
    sb, sc, st = xp.strides
    cols = as_strided(xp, (B, cin, k, t_out), (sb, sc, st, st * stride), writeable=False)
    cols = cols.reshape(B, cin * k, t_out)
    w2 = w.reshape(cout, cin * k)
    out = np.matmul(w2, cols)

    def backward_w(g):
        return np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)

    def backward_x(g):
        gcols = np.matmul(w2.T, g).reshape(B, cin, k, t_out)
        gxp = np.zeros((B, cin, T + pl + pr), dtype=g.dtype)
        span = stride * (t_out - 1) + 1
        for j in range(k):
            gxp[:, :, j:j + span:stride] += gcols[:, :, j, :]
        return gxp[:, :, pl:pl + T]

    return out, backward_x, backward_w


def group_norm(x: Tensor, groups: int, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    B, C, T = x.shape
    if C % groups:
        raise ValueError(f"{C} channels not divisible into {groups} groups")
    xg = x.data.reshape(B, groups, -1)
    mu = xg.mean(axis=-1, keepdims=True)
    var = xg.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv).reshape(B, C, T)
    out = xhat * gamma.data[:, None] + beta.data[:, None]

    def backward(g):
        gx = None
        gg = (g * xhat).sum(axis=(0, 2)) if gamma.requires_grad else None
        gbeta = g.sum(axis=(0, 2)) if beta.requires_grad else None
        if x.requires_grad:
            gh = (g * gamma.data[:, None]).reshape(B, groups, -1)
            xh = xhat.reshape(B, groups, -1)
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xh * (gh * xh).mean(axis=-1, keepdims=True))
            gx = gx.reshape(B, C, T)
        return gx, gg, gbeta

    return make_node(out, (x, gamma, beta), backward)


def silu(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    out = x.data * s
    return make_node(out, (x,), lambda g: (g * s * (1.0 + x.data * (1.0 - s)),))


def _softmax(a: np.ndarray) -> np.ndarray:
    a = a - a.max(axis=-1, keepdims=True)
    np.exp(a, out=a)
    a /= a.sum(axis=-1, keepdims=True)
    return a


def mhsa(x: Tensor, heads: int, wq: Tensor, wk: Tensor, wv: Tensor, wo: Tensor,
         return_attn: bool = False):
    """Multi-head scaled dot-product self-attention over the time axis.

    The projections are ``C x C`` matrices applied channel-wise at every time
    step. No positional encoding and no residual; callers add the skip.
    """
    B, C, T = x.shape
    if C % heads:
        raise ValueError(f"{C} channels not divisible into {heads} heads")
    dh = C // heads
    scale = 1.0 / math.sqrt(dh)
    xd = x.data
    q = np.matmul(wq.data, xd).reshape(B, heads, dh, T)
    k = np.matmul(wk.data, xd).reshape(B, heads, dh, T)
    v = np.matmul(wv.data, xd).reshape(B, heads, dh, T)
    attn = _softmax(np.matmul(q.transpose(0, 1, 3, 2), k) * scale)  # (B, H, Tq, Tk)
    o = np.matmul(v, attn.transpose(0, 1, 3, 2)).reshape(B, C, T)
    out = np.matmul(wo.data, o)

    def backward(g):
        gwo = np.tensordot(g, o, axes=([0, 2], [0, 2])) if wo.requires_grad else None
        go = np.matmul(wo.data.T, g).reshape(B, heads, dh, T)
        gv = np.matmul(go, attn)
        ga = np.matmul(go.transpose(0, 1, 3, 2), v)
        gs = attn * (ga - (ga * attn).sum(axis=-1, keepdims=True)) * scale
        gq = np.matmul(k, gs.transpose(0, 1, 3, 2)).reshape(B, C, T)
        gk = np.matmul(q, gs).reshape(B, C, T)
        gv = gv.reshape(B, C, T)
        grads = []
        for w, gp in ((wq, gq), (wk, gk), (wv, gv)):
            grads.append(np.tensordot(gp, xd, axes=([0, 2], [0, 2])) if w.requires_grad else None)
        gx = None
        if x.requires_grad:
            gx = np.matmul(wq.data.T, gq) + np.matmul(wk.data.T, gk) + np.matmul(wv.data.T, gv)
        return (gx, *grads, gwo)

    y = make_node(out, (x, wq, wk, wv, wo), backward)
    return (y, attn) if return_attn else y


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    B, C, T = x.shape
    out = np.repeat(x.data, factor, axis=-1)
    return make_node(out, (x,), lambda g: (g.reshape(B, C, T, factor).sum(axis=-1),))


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` shaped (in_features, out_features)."""
    y = x @ weight
    return y if bias is None else y + bias


def global_avg_pool(x: Tensor) -> Tensor:
    return x.mean(axis=-1)
