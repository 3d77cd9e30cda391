"""Layer building blocks: modules with named, checkpointable parameters."""
from __future__ import annotations

import math
from typing import Iterator, Optional

import numpy as np

from . import functional as F
from .tensor import DOUBLE, SINGLE, Parameter, Tensor


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def attention_heads(width: int) -> int:
    """Head count rule: one head per 64 channels, at least one."""
    return max(1, width // 64)


class Module:
    """Minimal module: children and parameters registered in definition order."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield (f"{prefix}{name}", p)
        for name, child in self._children.items():
            yield from child.named_parameters(prefix=f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


class ModuleList(Module):
    def __init__(self, modules):
        super().__init__()
        self._items = list(modules)
        for i, m in enumerate(self._items):
            self._children[str(i)] = m

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, dtype=SINGLE,
                 zero_init: bool = False, bias: bool = True):
        super().__init__()
        if zero_init:
            w = np.zeros((d_in, d_out), dtype=dtype)
        else:
            w = glorot_uniform(rng, (d_in, d_out), d_in, d_out, dtype)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(d_out, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class Conv1d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0, dtype=SINGLE):
        super().__init__()
        fan_in = c_in * kernel
        self.weight = Parameter(glorot_uniform(rng, (c_out, c_in, kernel), fan_in, c_out, dtype))
        self.bias = Parameter(np.zeros(c_out, dtype=dtype))
        self.stride = stride
        self.padding = padding
        self.kernel = kernel

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv1d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def out_len(self, length: int) -> int:
        return (length + 2 * self.padding - self.kernel) // self.stride + 1


class LayerNorm(Module):
    def __init__(self, d: int, dtype=SINGLE):
        super().__init__()
        self.gamma = Parameter(np.ones(d, dtype=dtype))
        self.beta = Parameter(np.zeros(d, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gamma, self.beta)


class MultiHeadAttention(Module):
    """Self-attention over the second-to-last axis of [..., T, d] inputs."""

    def __init__(self, d: int, rng: np.random.Generator, dtype=SINGLE):
        super().__init__()
        self.n_heads = attention_heads(d)
        self.wq = Linear(d, d, rng, dtype)
        # a key bias shifts every score in a row equally, which softmax
        # ignores; the parameter would be dead weight
        self.wk = Linear(d, d, rng, dtype, bias=False)
        self.wv = Linear(d, d, rng, dtype)
        self.wo = Linear(d, d, rng, dtype)

    def __call__(self, x: Tensor, mask: Optional[np.ndarray] = None,
                 collect: Optional[list] = None) -> Tensor:
        out = F.masked_multihead_attention(
            self.wq(x), self.wk(x), self.wv(x), self.n_heads, mask=mask, collect=collect
        )
        return self.wo(out)


class SelfAttentionBlock(Module):
    """Pre-norm residual self-attention round (no feed-forward)."""

    def __init__(self, d: int, rng: np.random.Generator, dtype=SINGLE):
        super().__init__()
        self.norm = LayerNorm(d, dtype)
        self.attn = MultiHeadAttention(d, rng, dtype)

    def __call__(self, x: Tensor, mask: Optional[np.ndarray] = None,
                 collect: Optional[list] = None) -> Tensor:
        return x + self.attn(self.norm(x), mask=mask, collect=collect)


class TransformerLayer(Module):
    """Standard pre-norm encoder layer: masked attention + feed-forward."""

    def __init__(self, d: int, rng: np.random.Generator, ffn_mult: int = 4, dtype=SINGLE):
        super().__init__()
        self.norm1 = LayerNorm(d, dtype)
        self.attn = MultiHeadAttention(d, rng, dtype)
        self.norm2 = LayerNorm(d, dtype)
        self.ffn1 = Linear(d, ffn_mult * d, rng, dtype)
        self.ffn2 = Linear(ffn_mult * d, d, rng, dtype)

    def __call__(self, x: Tensor, mask: Optional[np.ndarray] = None,
                 collect: Optional[list] = None) -> Tensor:
        x = x + self.attn(self.norm1(x), mask=mask, collect=collect)
        return x + self.ffn2(F.relu(self.ffn1(self.norm2(x))))


def dtype_of(name: str):
    if name == "double":
        return DOUBLE
    if name == "single":
        return SINGLE
    raise ValueError(f"unknown dtype name {name!r}")
