"""Parameterized layers built on the autodiff tensors.

Modules hold their parameters as ``Tensor(requires_grad=True)`` attributes
and recurse through sub-modules (including lists of modules) for parameter
enumeration, so checkpoints can address every weight by a stable dotted
name. Initialization draws from a caller-supplied numpy Generator, which
keeps model construction fully deterministic for a given seed.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .tensor import (Tensor, attention, concat_cols, conv2d, layer_norm,
                     relu, slice_cols)


class Module:
    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{full}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise KeyError(
                f"parameter names do not match: missing={missing} "
                f"unexpected={unexpected}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"parameter {name}: checkpoint shape {arr.shape} != "
                    f"model shape {p.data.shape}")
            p.data = arr.copy()


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int,
            shape: tuple[int, ...]) -> np.ndarray:
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


class Linear(Module):
    def __init__(self, din: int, dout: int, rng: np.random.Generator,
                 bias: bool = True):
        self.w = Tensor(_xavier(rng, din, dout, (din, dout)),
                        requires_grad=True)
        self.b = Tensor(np.zeros(dout), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = x @ self.w
        return out + self.b if self.b is not None else out


class Conv2d(Module):
    def __init__(self, kh: int, kw: int, cin: int, cout: int,
                 rng: np.random.Generator, stride: int = 1, bias: bool = True):
        fan_in = kh * kw * cin
        fan_out = kh * kw * cout
        self.w = Tensor(_xavier(rng, fan_in, fan_out, (kh, kw, cin, cout)),
                        requires_grad=True)
        self.b = Tensor(np.zeros(cout), requires_grad=True) if bias else None
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        out = conv2d(x, self.w, stride=self.stride)
        return out + self.b if self.b is not None else out


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta)


class MultiHeadAttention(Module):
    """Multi-head scaled dot-product attention over 2-D token matrices."""

    def __init__(self, c: int, heads: int, rng: np.random.Generator):
        if c % heads != 0:
            raise ValueError(f"channels {c} not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = c // heads
        self.wq = Linear(c, c, rng)
        self.wk = Linear(c, c, rng)
        self.wv = Linear(c, c, rng)
        self.wo = Linear(c, c, rng)

    def __call__(self, x_q: Tensor, x_kv: Tensor) -> Tensor:
        q, k, v = self.wq(x_q), self.wk(x_kv), self.wv(x_kv)
        outs = []
        for h in range(self.heads):
            lo, hi = h * self.head_dim, (h + 1) * self.head_dim
            outs.append(attention(slice_cols(q, lo, hi),
                                  slice_cols(k, lo, hi),
                                  slice_cols(v, lo, hi)))
        merged = outs[0] if len(outs) == 1 else concat_cols(outs)
        return self.wo(merged)


class FeedForward(Module):
    def __init__(self, c: int, rng: np.random.Generator, mult: int = 4):
        self.fc1 = Linear(c, c * mult, rng)
        self.fc2 = Linear(c * mult, c, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(relu(self.fc1(x)))


class TransformerLayer(Module):
    """Self-attention + FFN with residuals, post-layer-norm ordering."""

    def __init__(self, c: int, heads: int, rng: np.random.Generator):
        self.attn = MultiHeadAttention(c, heads, rng)
        self.ln1 = LayerNorm(c)
        self.ffn = FeedForward(c, rng)
        self.ln2 = LayerNorm(c)

    def __call__(self, x: Tensor) -> Tensor:
        x = self.ln1(x + self.attn(x, x))
        return self.ln2(x + self.ffn(x))


class DecoderLayer(Module):
    """Query self-attention, cross-attention into memory, then FFN."""

    def __init__(self, c: int, heads: int, rng: np.random.Generator):
        self.self_attn = MultiHeadAttention(c, heads, rng)
        self.ln1 = LayerNorm(c)
        self.cross_attn = MultiHeadAttention(c, heads, rng)
        self.ln2 = LayerNorm(c)
        self.ffn = FeedForward(c, rng)
        self.ln3 = LayerNorm(c)

    def __call__(self, q: Tensor, memory: Tensor) -> Tensor:
        q = self.ln1(q + self.self_attn(q, q))
        q = self.ln2(q + self.cross_attn(q, memory))
        return self.ln3(q + self.ffn(q))


class ConvBlock(Module):
    """Two 3x3 same convolutions with a ReLU between them."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator):
        self.conv1 = Conv2d(3, 3, cin, cout, rng)
        self.conv2 = Conv2d(3, 3, cout, cout, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.conv2(relu(self.conv1(x)))
