"""Mask-aware resampling: sampling blocks, MAUS, MADS and the mask pyramid."""
from __future__ import annotations

import numpy as np

from . import ops
from .nn import Conv2d, Module
from .tensor import ShapeError, Tensor

SHUFFLE_GROUPS = 2


def check_binary(mask: Tensor, where: str) -> None:
    d = mask.data
    if not np.all((d == 0) | (d == 1)):
        raise ValueError(f"{where}: mask must be binary (0/1)")


class SamplingBlockUp(Module):
    """1x1 conv C -> 4*C_out, pixel shuffle x2, channel shuffle."""

    def __init__(self, c: int, rng, dtype="double", out_channels: int | None = None):
        self.out_channels = c if out_channels is None else out_channels
        self.conv = Conv2d(c, 4 * self.out_channels, 1, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        y = ops.pixel_shuffle(self.conv(x), 2)
        return ops.channel_shuffle(y, SHUFFLE_GROUPS) if self.out_channels % SHUFFLE_GROUPS == 0 else y


class SamplingBlockDown(Module):
    """Pixel unshuffle x2 (C -> 4C), 1x1 conv to 2C, channel shuffle."""

    def __init__(self, c: int, rng, dtype="double"):
        self.conv = Conv2d(4 * c, 2 * c, 1, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.channel_shuffle(self.conv(ops.pixel_unshuffle(x, 2)), SHUFFLE_GROUPS)


def sampling_block_up(x: Tensor, params: SamplingBlockUp) -> Tensor:
    return params(x)


def sampling_block_down(x: Tensor, params: SamplingBlockDown) -> Tensor:
    return params(x)


class MAUS(Module):
    """Mask-aware up-sampler: H x W x C features + H x W x 1 mask -> 2H x 2W x C/2."""

    def __init__(self, c: int, rng, dtype="double"):
        if c % 2:
            raise ShapeError(f"MAUS needs an even channel count, got {c}")
        self.c = c
        self.sample = SamplingBlockUp(c, rng, dtype)
        self.mask_conv = Conv2d(1, 2 * c, 1, rng, dtype)
        self.fuse = Conv2d(c // 2, c // 2, 3, rng, dtype, groups=c // 2)

    def mask_branch(self, mask: Tensor) -> Tensor:
        return ops.pixel_shuffle(self.mask_conv(mask), 2)

    def __call__(self, x: Tensor, mask: Tensor) -> Tensor:
        c = x.shape[-1]
        if c != self.c:
            raise ShapeError(f"MAUS built for {self.c} channels, got {c}")
        check_binary(mask, "MAUS")
        f_up = self.sample(x)
        # odd channels counted from 1, i.e. even 0-based positions
        f_select = ops.select_channels(f_up, np.arange(0, c, 2))
        return self.fuse(ops.add(f_select, self.mask_branch(mask)))


def maus(x: Tensor, mask: Tensor, params: MAUS) -> Tensor:
    return params(x, mask)


def mask_slot_indices(c2: int) -> np.ndarray:
    """Mask channel (0-based) paired with each of the ``c2`` feature channels.

    1-based: slot i takes mask channel ((i - 1) mod 4) + 1.
    """
    return np.arange(c2) % 4


class MADS(Module):
    """Mask-aware down-sampler: H x W x C + H x W x 1 -> H/2 x W/2 x 2C."""

    def __init__(self, c: int, rng, dtype="double"):
        self.c = c
        self.sample = SamplingBlockDown(c, rng, dtype)
        # one output per (feature, mask) pair
        self.fuse = Conv2d(4 * c, 2 * c, 3, rng, dtype, groups=2 * c)

    def interleave(self, f_down: Tensor, m_down: Tensor) -> Tensor:
        tiled = ops.select_channels(m_down, mask_slot_indices(f_down.shape[-1]))
        return ops.interleave_channels(f_down, tiled)

    def __call__(self, x: Tensor, mask: Tensor) -> Tensor:
        _, h, w, c = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"MADS needs even H and W, got {h}x{w}")
        if c != self.c:
            raise ShapeError(f"MADS built for {self.c} channels, got {c}")
        check_binary(mask, "MADS")
        f_down = self.sample(x)
        m_down = ops.pixel_unshuffle(mask, 2)
        return self.fuse(self.interleave(f_down, m_down))


def mads(x: Tensor, mask: Tensor, params: MADS) -> Tensor:
    return params(x, mask)


def build_mask_pyramid(mask: Tensor | np.ndarray, levels: int) -> list[Tensor]:
    """Level s is the mask max-pooled 2x2 ``s`` times (damaged if any parent is)."""
    m = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
    h, w = m.shape[1], m.shape[2]
    f = 2 ** (levels - 1)
    if h % f or w % f:
        raise ShapeError(f"mask {h}x{w} not divisible by 2^{levels - 1}")
    out = [Tensor(m.copy())]
    for _ in range(levels - 1):
        n, hh, ww, c = m.shape
        m = m.reshape(n, hh // 2, 2, ww // 2, 2, c).max(axis=(2, 4))
        out.append(Tensor(m.copy()))
    return out
