"""Transformer building blocks: LayerNorm, MHSA, FFN, Restormer and MaxViT blocks."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import ops
from .tensor import Parameter, ShapeError, Tensor, resolve_dtype


class Module:
    """Parameter container; attributes that are Parameters, Modules or lists of
    Modules are discovered in definition order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, val in vars(self).items():
            if isinstance(val, Parameter):
                yield prefix + key, val
            elif isinstance(val, Module):
                yield from val.named_parameters(f"{prefix}{key}.")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self, prefix: str = "") -> None:
        for name, p in self.named_parameters(prefix):
            p.name = name


def init_weight(rng: np.random.Generator, shape, fan_in: int, dtype) -> Parameter:
    bound = 1.0 / math.sqrt(fan_in)
    return Parameter(rng.uniform(-bound, bound, size=shape), dtype=dtype)


def zeros(shape, dtype) -> Parameter:
    return Parameter(np.zeros(shape), dtype=dtype)


def ones(shape, dtype) -> Parameter:
    return Parameter(np.ones(shape), dtype=dtype)


class Linear(Module):
    def __init__(self, cin: int, cout: int, rng, dtype="double", bias: bool = True):
        dtype = resolve_dtype(dtype)
        self.w = init_weight(rng, (cin, cout), cin, dtype)
        if bias:
            self.b = init_weight(rng, (cout,), cin, dtype)
        else:
            self.b = None

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.w, self.b)


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, k: int, rng, dtype="double", groups: int = 1,
                 pad: int | None = None, bias: bool = True):
        dtype = resolve_dtype(dtype)
        fan_in = (cin // groups) * k * k
        self.weight = init_weight(rng, (cout, cin // groups, k, k), fan_in, dtype)
        self.bias = init_weight(rng, (cout,), fan_in, dtype) if bias else None
        self.groups = groups
        self.pad = k // 2 if pad is None else pad

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=1, pad=self.pad, groups=self.groups)


class LayerNorm(Module):
    def __init__(self, c: int, dtype="double", eps: float = 1e-6):
        dtype = resolve_dtype(dtype)
        self.scale = ones((c,), dtype)
        self.shift = zeros((c,), dtype)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.scale, self.shift, self.eps)


def layer_norm(x: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-6) -> Tensor:
    return ops.layer_norm(x, scale, shift, eps)


class MHSA(Module):
    """Spatial multi-head self-attention over token sequences.

    Per-head projections are the column blocks of ``wq``, ``wk``, ``wv``:
    head i uses columns ``i*d:(i+1)*d`` with ``d = C // heads``.
    """

    def __init__(self, c: int, heads: int, rng, dtype="double"):
        if c % heads:
            raise ShapeError(f"heads={heads} does not divide channels={c}")
        dtype = resolve_dtype(dtype)
        self.heads = heads
        self.wq = init_weight(rng, (c, c), c, dtype)
        self.wk = init_weight(rng, (c, c), c, dtype)
        self.wv = init_weight(rng, (c, c), c, dtype)
        self.wo = init_weight(rng, (c, c), c, dtype)

    def attend(self, x: Tensor) -> Tensor:
        """``x`` is (B, T, C); returns (B, T, C)."""
        b, t, c = x.shape
        h = self.heads
        d = c // h

        def split(y):
            return ops.transpose(ops.reshape(y, (b, t, h, d)), (0, 2, 1, 3))

        q = split(ops.matmul(x, self.wq))
        k = split(ops.matmul(x, self.wk))
        v = split(ops.matmul(x, self.wv))
        scores = ops.mul(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(d))
        attn = ops.softmax(scores, axis=-1)
        heads = ops.transpose(ops.matmul(attn, v), (0, 2, 1, 3))
        return ops.matmul(ops.reshape(heads, (b, t, c)), self.wo)

    def __call__(self, x: Tensor) -> Tensor:
        n, hh, ww, c = x.shape
        y = self.attend(ops.reshape(x, (n, hh * ww, c)))
        return ops.reshape(y, (n, hh, ww, c))


def mhsa(x: Tensor, params: MHSA) -> Tensor:
    return params(x)


class FFN(Module):
    def __init__(self, c: int, rng, dtype="double", expansion: int = 2):
        self.w1 = Linear(c, expansion * c, rng, dtype)
        self.w2 = Linear(expansion * c, c, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.w2(ops.gelu(self.w1(x)))


class RestormerBlock(Module):
    """x_hat = x + MHSA(LN(x));  y = x_hat + FFN(LN(x_hat))."""

    def __init__(self, c: int, heads: int, rng, dtype="double", expansion: int = 2):
        self.ln1 = LayerNorm(c, dtype)
        self.attn = MHSA(c, heads, rng, dtype)
        self.ln2 = LayerNorm(c, dtype)
        self.ffn = FFN(c, rng, dtype, expansion)

    def __call__(self, x: Tensor) -> Tensor:
        x_hat = ops.add(x, self.attn(self.ln1(x)))
        return ops.add(x_hat, self.ffn(self.ln2(x_hat)))


def restormer_block(x: Tensor, params: RestormerBlock) -> Tensor:
    return params(x)


def window_partition(x: Tensor, p: int) -> Tensor:
    """(N, H, W, C) -> (N * H/p * W/p, p*p, C): tokens of each p x p window."""
    n, h, w, c = x.shape
    if h % p or w % p:
        raise ShapeError(f"window size {p} does not divide {h}x{w}")
    y = ops.reshape(x, (n, h // p, p, w // p, p, c))
    y = ops.transpose(y, (0, 1, 3, 2, 4, 5))
    return ops.reshape(y, (n * (h // p) * (w // p), p * p, c))


def window_unpartition(t: Tensor, p: int, n: int, h: int, w: int) -> Tensor:
    c = t.shape[-1]
    y = ops.reshape(t, (n, h // p, w // p, p, p, c))
    y = ops.transpose(y, (0, 1, 3, 2, 4, 5))
    return ops.reshape(y, (n, h, w, c))


def grid_partition(x: Tensor, p: int) -> Tensor:
    """(N, H, W, C) -> (N * p*p, H/p * W/p, C): one sequence per intra-window offset,
    holding that offset's pixel from every window."""
    n, h, w, c = x.shape
    if h % p or w % p:
        raise ShapeError(f"window size {p} does not divide {h}x{w}")
    y = ops.reshape(x, (n, h // p, p, w // p, p, c))
    y = ops.transpose(y, (0, 2, 4, 1, 3, 5))
    return ops.reshape(y, (n * p * p, (h // p) * (w // p), c))


def grid_unpartition(t: Tensor, p: int, n: int, h: int, w: int) -> Tensor:
    c = t.shape[-1]
    y = ops.reshape(t, (n, p, p, h // p, w // p, c))
    y = ops.transpose(y, (0, 3, 1, 4, 2, 5))
    return ops.reshape(y, (n, h, w, c))


class MaxVitBlock(Module):
    """Window attention, then grid attention, then FFN; each pre-norm residual."""

    def __init__(self, c: int, heads: int, rng, dtype="double", window: int = 4,
                 expansion: int = 2):
        self.window = window
        self.ln_block = LayerNorm(c, dtype)
        self.block_attn = MHSA(c, heads, rng, dtype)
        self.ln_grid = LayerNorm(c, dtype)
        self.grid_attn = MHSA(c, heads, rng, dtype)
        self.ln_ffn = LayerNorm(c, dtype)
        self.ffn = FFN(c, rng, dtype, expansion)

    def __call__(self, x: Tensor) -> Tensor:
        n, h, w, _ = x.shape
        p = self.window
        if h % p or w % p:
            raise ShapeError(f"MaxViT window {p} does not divide {h}x{w}")
        y = window_partition(self.ln_block(x), p)
        x = ops.add(x, window_unpartition(self.block_attn.attend(y), p, n, h, w))
        y = grid_partition(self.ln_grid(x), p)
        x = ops.add(x, grid_unpartition(self.grid_attn.attend(y), p, n, h, w))
        return ops.add(x, self.ffn(self.ln_ffn(x)))


def maxvit_block(x: Tensor, params: MaxVitBlock) -> Tensor:
    return params(x)
