"""Co-feature aggregation: FFT-assisted channel (CFFB) and spatial (SFFB) gates."""
from __future__ import annotations

import math

import numpy as np

from . import ops
from .nn import Conv2d, Linear, MaxVitBlock, Module
from .tensor import ComplexTensor, Tensor


def _non_dc_mask(h: int, w: int, dtype) -> Tensor:
    m = np.ones((1, h, w, 1), dtype=dtype)
    m[0, 0, 0, 0] = 0.0
    return Tensor(m)


def highpass(z: ComplexTensor) -> ComplexTensor:
    """Zero the DC bin of every channel."""
    keep = _non_dc_mask(z.shape[1], z.shape[2], z.re.dtype)
    return ComplexTensor(ops.mul(z.re, keep), ops.mul(z.im, keep))


def frequency_descriptor(x: Tensor) -> Tensor:
    """Mean spectral magnitude over non-DC bins per channel, N x 1 x 1 x C.

    The spectrum is scaled by 1/sqrt(H*W) so the descriptor does not grow with resolution.
    """
    _, h, w, _ = x.shape
    mag = ops.magnitude(ops.fft2(x))
    keep = _non_dc_mask(h, w, x.dtype)
    total = ops.sum(ops.mul(mag, keep), axis=(1, 2), keepdims=True)
    return ops.mul(total, 1.0 / ((h * w - 1) * math.sqrt(h * w)))


class CFFB(Module):
    """Channel gate from [spatial mean ; spectral magnitude mean] -> bottleneck -> sigmoid."""

    def __init__(self, c: int, rng, dtype="double", reduction: int = 4):
        hidden = max(1, c // reduction)
        self.fc1 = Linear(2 * c, hidden, rng, dtype)
        self.fc2 = Linear(hidden, c, rng, dtype)

    def descriptor(self, x: Tensor) -> Tensor:
        return ops.concat((ops.mean_spatial(x), frequency_descriptor(x)), axis=-1)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.sigmoid(self.fc2(ops.gelu(self.fc1(self.descriptor(x)))))


class SFFB(Module):
    """Spatial gate from [channel mean ; channel max ; channel mean of high-passed x]."""

    def __init__(self, rng, dtype="double", kernel: int = 7):
        self.conv = Conv2d(3, 1, kernel, rng, dtype)

    @staticmethod
    def highpass_map(x: Tensor) -> Tensor:
        return ops.mean_channels(ops.ifft2(highpass(ops.fft2(x))))

    def descriptor(self, x: Tensor) -> Tensor:
        return ops.concat((ops.mean_channels(x), ops.max_channels(x), self.highpass_map(x)),
                          axis=-1)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.sigmoid(self.conv(self.descriptor(x)))


def cffb(x: Tensor, params: CFFB) -> Tensor:
    return params(x)


def sffb(x: Tensor, params: SFFB) -> Tensor:
    return params(x)


class FocusPair(Module):
    """F_mid = F * CFFB(F); F_out = F_mid * SFFB(F_mid)."""

    def __init__(self, c: int, rng, dtype="double", reduction: int = 4, kernel: int = 7):
        self.cffb = CFFB(c, rng, dtype, reduction)
        self.sffb = SFFB(rng, dtype, kernel)

    def __call__(self, x: Tensor) -> Tensor:
        mid = ops.mul(x, self.cffb(x))
        return ops.mul(mid, self.sffb(mid))


class CFA(Module):
    def __init__(self, c: int, heads: int, rng, dtype="double", window: int = 4,
                 reduction: int = 4, kernel: int = 7):
        self.c = c
        self.project = Conv2d(c + 1, c, 1, rng, dtype)
        self.maxvit1 = MaxVitBlock(c, heads, rng, dtype, window)
        self.maxvit2 = MaxVitBlock(c, heads, rng, dtype, window)
        self.focus_rgb = FocusPair(3 * c, rng, dtype, reduction, kernel)
        self.focus_mask = FocusPair(2 * c + 1, rng, dtype, reduction, kernel)
        self.reduce_rgb = Conv2d(3 * c, c, 1, rng, dtype)
        self.reduce_mask = Conv2d(2 * c + 1, c, 1, rng, dtype)

    def __call__(self, x: Tensor, mask: Tensor) -> Tensor:
        f1 = self.maxvit1(self.project(ops.concat((x, mask), axis=-1)))
        f2 = self.maxvit2(f1)
        cat_rgb = ops.concat((f1, f2, x), axis=-1)
        cat_mask = ops.concat((f1, f2, mask), axis=-1)
        f_rgb = self.reduce_rgb(self.focus_rgb(cat_rgb))
        f_mask = self.reduce_mask(self.focus_mask(cat_mask))
        return ops.add(ops.mul(f_rgb, ops.sigmoid(f_mask)), x)


def cfa_forward(x: Tensor, mask: Tensor, params: CFA) -> Tensor:
    return params(x, mask)
