"""Differentiable operations on Tensors.

Everything here is pure and deterministic. Binary ops follow numpy
broadcasting; gradients are summed back down to the operand shapes.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from ..errors import NumericsError
from .tensor import Tensor, make_node, unbroadcast


def _wrap(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    b = _wrap(b, a)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(unbroadcast(g, b.shape))

    return make_node(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b) -> Tensor:
    b = _wrap(b, a)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(unbroadcast(-g, b.shape))

    return make_node(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    b = _wrap(b, a)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(unbroadcast(g * a.data, b.shape))

    return make_node(a.data * b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(-g)

    return make_node(-a.data, (a,), backward)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * s)

    return make_node(a.data * s, (a,), backward)


def absolute(a: Tensor) -> Tensor:
    sign = np.sign(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * sign)

    return make_node(np.abs(a.data), (a,), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * mask)

    return make_node(a.data * mask, (a,), backward)


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old = a.shape

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g.reshape(old))

    return make_node(a.data.reshape(shape), (a,), backward)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g.transpose(inverse))

    return make_node(a.data.transpose(axes), (a,), backward)


def swap_last(a: Tensor) -> Tensor:
    """Transpose the trailing two axes (any leading batch dims)."""
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    parts = list(parts)
    extents = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + extents)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p.accumulate_grad(g[tuple(sl)])

    return make_node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backward)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[sl] = g
            a.accumulate_grad(full)

    return make_node(a.data[sl], (a,), backward)


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old = a.shape

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(unbroadcast(g, old))

    return make_node(np.broadcast_to(a.data, shape).copy(), (a,), backward)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a.accumulate_grad(np.broadcast_to(g, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate_grad(np.broadcast_to(g, a.shape).copy())

    return make_node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    elif isinstance(axis, int):
        count = a.shape[axis]
    else:
        count = int(np.prod([a.shape[ax] for ax in axis]))
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a.accumulate_grad(unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b.accumulate_grad(unbroadcast(gb, b.shape))

    return make_node(np.matmul(a.data, b.data), (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """x @ w (+ b), x has shape [..., in], w [in, out]."""
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


# ---------------------------------------------------------------------------
# normalization and softmax
# ---------------------------------------------------------------------------

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax; -inf logits produce exactly-zero weights."""
    m = np.max(a.data, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(a.data - m)
    denom = e.sum(axis=axis, keepdims=True)
    if np.any(denom == 0.0):
        raise NumericsError("degenerate attention row")
    s = e / denom

    def backward(g):
        if a.requires_grad:
            inner = (g * s).sum(axis=axis, keepdims=True)
            a.accumulate_grad(s * (g - inner))

    return make_node(s, (a,), backward)


def masked_fill(a: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where ``mask`` is True; no gradient flows to them."""
    keep = ~mask

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * keep)

    return make_node(np.where(mask, value, a.data), (a,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        if gamma.requires_grad:
            gamma.accumulate_grad(unbroadcast(g * xhat, gamma.shape))
        if beta.requires_grad:
            beta.accumulate_grad(unbroadcast(g, beta.shape))
        if x.requires_grad:
            gh = g * gamma.data
            term = gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
            x.accumulate_grad(term * inv)

    return make_node(out, (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# temporal convolution
# ---------------------------------------------------------------------------

def conv1d(x: Tensor, w: Tensor, b: Optional[Tensor], stride: int = 1, padding: int = 0) -> Tensor:
    """Batched 1-d convolution: x [B, C_in, L], w [C_out, C_in, k] -> [B, C_out, L_out]."""
    if x.ndim != 3 or w.ndim != 3:
        raise ValueError("conv1d expects x [B, C_in, L] and w [C_out, C_in, k]")
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"channel mismatch: input {x.shape[1]} vs kernel {w.shape[1]}")
    if stride < 1 or padding < 0:
        raise ValueError("stride must be >= 1 and padding >= 0")
    B, c_in, L = x.shape
    c_out, _, k = w.shape
    L_pad = L + 2 * padding
    if L_pad < k:
        raise ValueError(f"kernel of size {k} longer than padded input of length {L_pad}")
    L_out = (L_pad - k) // stride + 1

    xp = x.data
    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding)))
    # taps[j] is the input slice seen by kernel position j
    taps = np.stack([xp[:, :, j : j + stride * L_out : stride] for j in range(k)], axis=3)
    out = np.einsum("bilj,oij->bol", taps, w.data, optimize=True)
    if b is not None:
        out = out + b.data[None, :, None]

    def backward(g):
        if w.requires_grad:
            w.accumulate_grad(np.einsum("bol,bilj->oij", g, taps, optimize=True))
        if b is not None and b.requires_grad:
            b.accumulate_grad(g.sum(axis=(0, 2)))
        if x.requires_grad:
            gtaps = np.einsum("bol,oij->bilj", g, w.data, optimize=True)
            gxp = np.zeros((B, c_in, L_pad), dtype=x.data.dtype)
            for j in range(k):
                gxp[:, :, j : j + stride * L_out : stride] += gtaps[:, :, :, j]
            if padding:
                gxp = gxp[:, :, padding : padding + L]
            x.accumulate_grad(gxp)

    parents = (x, w) if b is None else (x, w, b)
    return make_node(out, parents, backward)


def temporal_conv1d(x: Tensor, w: Tensor, b: Optional[Tensor] = None,
                    stride: int = 1, padding: int = 0) -> Tensor:
    """Unbatched convolution: x [C_in, L] -> [C_out, L_out]."""
    if x.ndim != 2:
        raise ValueError("temporal_conv1d expects x of shape [C_in, L]")
    out = conv1d(reshape(x, (1, *x.shape)), w, b, stride=stride, padding=padding)
    return reshape(out, out.shape[1:])


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def cross_entropy_mean(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean of -log softmax(logits)[target] over the batch; logits [B, C]."""
    if logits.ndim != 2:
        raise ValueError("cross_entropy_mean expects logits of shape [B, C]")
    B, C = logits.shape
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (B,):
        raise ValueError("targets must have one class index per row")
    if np.any(targets < 0) or np.any(targets >= C):
        raise ValueError(f"target index out of range [0, {C})")
    m = logits.data.max(axis=1, keepdims=True)
    z = logits.data - m
    lse = np.log(np.exp(z).sum(axis=1)) + m[:, 0]
    picked = logits.data[np.arange(B), targets]
    value = np.asarray((lse - picked).mean(), dtype=logits.data.dtype)

    def backward(g):
        if logits.requires_grad:
            p = np.exp(z - np.log(np.exp(z).sum(axis=1, keepdims=True)))
            p[np.arange(B), targets] -= 1.0
            logits.accumulate_grad(g * p / B)

    return make_node(value, (logits,), backward)


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target] for a single logit vector [C]."""
    if logits.ndim != 1:
        raise ValueError("cross_entropy expects a rank-1 logit vector")
    target = int(target)
    if target < 0 or target >= logits.shape[0]:
        raise ValueError(f"target {target} out of range [0, {logits.shape[0]})")
    return cross_entropy_mean(reshape(logits, (1, logits.shape[0])), np.array([target]))


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------

def softmax_attention(
    queries: Tensor,
    keys: Tensor,
    values_in: Tensor,
    mask: Optional[np.ndarray] = None,
    return_weights: bool = False,
):
    """Scaled dot-product attention for single-head 2-d inputs.

    queries [n_q, d_h], keys/values_in [n_k, d_h]; mask [n_q, n_k] with True
    marking pairs that may attend. Masked weights are exactly zero.
    """
    if queries.ndim != 2 or keys.ndim != 2 or values_in.ndim != 2:
        raise ValueError("softmax_attention expects rank-2 inputs")
    if queries.shape[1] != keys.shape[1] or keys.shape != values_in.shape:
        raise ValueError(
            f"shape mismatch: q {queries.shape}, k {keys.shape}, v {values_in.shape}"
        )
    d_h = queries.shape[1]
    if d_h <= 0:
        raise ValueError("head dimension must be positive")
    scores = scale(matmul(queries, swap_last(keys)), 1.0 / math.sqrt(d_h))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (queries.shape[0], keys.shape[0]):
            raise ValueError(f"mask shape {mask.shape} does not match scores")
        if np.any(~mask.any(axis=1)):
            raise NumericsError("degenerate attention row")
        scores = masked_fill(scores, ~mask, -np.inf)
    weights = softmax(scores, axis=-1)
    out = matmul(weights, values_in)
    if return_weights:
        return out, weights
    return out


def masked_multihead_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    n_heads: int,
    mask: Optional[np.ndarray] = None,
    collect: Optional[list] = None,
) -> Tensor:
    """Multi-head attention on projected q/k/v of shape [..., T, d].

    ``mask`` is [T, T] boolean (True = attend), shared across batch and heads.
    When ``collect`` is a list the per-head weight arrays are appended to it.
    """
    *batch, T, d = q.shape
    if d % n_heads != 0:
        raise ValueError(f"width {d} not divisible into {n_heads} heads")
    d_h = d // n_heads

    def split_heads(t: Tensor) -> Tensor:
        t = reshape(t, (*batch, T, n_heads, d_h))
        axes = list(range(t.ndim))
        axes[-3], axes[-2] = axes[-2], axes[-3]
        return transpose(t, axes)  # [..., H, T, d_h]

    qh, kh, vh = split_heads(q), split_heads(k), split_heads(v)
    scores = scale(matmul(qh, swap_last(kh)), 1.0 / math.sqrt(d_h))
    if mask is not None:
        if np.any(~mask.any(axis=1)):
            raise NumericsError("degenerate attention row")
        scores = masked_fill(scores, ~mask, -np.inf)
    weights = softmax(scores, axis=-1)
    if collect is not None:
        collect.append(weights.data.copy())
    out = matmul(weights, vh)  # [..., H, T, d_h]
    axes = list(range(out.ndim))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    out = transpose(out, axes)
    return reshape(out, (*batch, T, d))


# attach the common operators to Tensor
Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(self, other)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(self, other)
Tensor.__neg__ = lambda self: neg(self)
Tensor.__matmul__ = lambda self, other: matmul(self, other)
