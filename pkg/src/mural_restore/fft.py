"""Iterative radix-2 FFT over numpy complex arrays.

The transforms here work on raw ndarrays; the differentiable wrappers live in
:mod:`mural_restore.ops`.  Computation is always carried out in complex128 so the
single-precision path only loses accuracy when the caller casts the result.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(size: int, inverse: bool) -> np.ndarray:
    sign = 1.0 if inverse else -1.0
    return np.exp(sign * 2j * np.pi * np.arange(size // 2) / size)


def fft_axis(a: np.ndarray, axis: int, inverse: bool = False) -> np.ndarray:
    """Unnormalized DFT of ``a`` along ``axis`` (sign +1 in the exponent if ``inverse``)."""
    a = np.moveaxis(np.asarray(a, dtype=np.complex128), axis, -1)
    n = a.shape[-1]
    if not is_power_of_two(n):
        raise ValueError(f"radix-2 FFT needs a power-of-two length, got {n}")
    lead = a.shape[:-1]
    out = a[..., _bit_reverse(n)]
    size = 2
    while size <= n:
        half = size // 2
        out = out.reshape(*lead, n // size, size)
        even = out[..., :half]
        odd = out[..., half:] * _twiddles(size, inverse)
        out = np.concatenate([even + odd, even - odd], axis=-1)
        size *= 2
    out = out.reshape(*lead, n)
    return np.moveaxis(out, -1, axis)


def fft2_raw(a: np.ndarray, axes: tuple[int, int] = (-3, -2)) -> np.ndarray:
    """Unnormalized 2-D forward transform over ``axes`` (default: H, W of an NHWC array)."""
    return fft_axis(fft_axis(a, axes[0]), axes[1])


def ifft2_raw(a: np.ndarray, axes: tuple[int, int] = (-3, -2)) -> np.ndarray:
    """Inverse of :func:`fft2_raw`, divided by the number of transformed points."""
    n = a.shape[axes[0]] * a.shape[axes[1]]
    return fft_axis(fft_axis(a, axes[0], inverse=True), axes[1], inverse=True) / n
