"""Brute-force reference implementations.

Deliberately slow and loop-based; they share no code with the vectorized
paths they are used to check.
"""
from __future__ import annotations

import cmath
import math

import numpy as np


def elementwise_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    for idx in np.ndindex(a.shape):
        out[idx] = a[idx] + b[idx]
    return out


def conv2d(x, w, b, stride=1, pad=0, groups=1) -> np.ndarray:
    n, h, wd, cin = x.shape
    cout, cg, k, _ = w.shape
    og = cout // groups
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, ho, wo, cout), dtype=np.float64)
    for bi in range(n):
        for oy in range(ho):
            for ox in range(wo):
                for co in range(cout):
                    g = co // og
                    acc = 0.0 if b is None else float(b[co])
                    for ci in range(cg):
                        cin_idx = g * cg + ci
                        for ky in range(k):
                            for kx in range(k):
                                iy = oy * stride + ky - pad
                                ix = ox * stride + kx - pad
                                if 0 <= iy < h and 0 <= ix < wd:
                                    acc += float(x[bi, iy, ix, cin_idx]) * float(w[co, ci, ky, kx])
                    out[bi, oy, ox, co] = acc
    return out


def matmul(a, b) -> np.ndarray:
    if a.ndim == 2:
        return matmul(a[None], b[None])[0]
    bsz, m, k = a.shape
    n = b.shape[-1]
    out = np.zeros((bsz, m, n))
    for bi in range(bsz):
        for i in range(m):
            for j in range(n):
                s = 0.0
                for t in range(k):
                    s += float(a[bi, i, t]) * float(b[bi, t, j])
                out[bi, i, j] = s
    return out


def dft2(x: np.ndarray) -> np.ndarray:
    """Direct DFT over axes 1, 2 of an (N, H, W, C) array."""
    n, h, w, c = x.shape
    out = np.zeros(x.shape, dtype=np.complex128)
    ys = np.arange(h)[:, None]
    xs = np.arange(w)[None, :]
    for u in range(h):
        for v in range(w):
            phase = np.exp(-2j * np.pi * (u * ys / h + v * xs / w))
            out[:, u, v, :] = np.einsum("nhwc,hw->nc", x, phase)
    return out


def pixel_shuffle(x: np.ndarray, r: int) -> np.ndarray:
    n, h, w, c = x.shape
    co = c // (r * r)
    out = np.zeros((n, h * r, w * r, co), dtype=x.dtype)
    for bi in range(n):
        for y in range(h * r):
            for xx in range(w * r):
                for ch in range(co):
                    dy, dx = y % r, xx % r
                    out[bi, y, xx, ch] = x[bi, y // r, xx // r, ch * r * r + dy * r + dx]
    return out


def channel_shuffle_order(c: int, groups: int) -> list[int]:
    per = c // groups
    return [g * per + j for j in range(per) for g in range(groups)]


def mhsa(x: np.ndarray, wq, wk, wv, wo, heads: int) -> np.ndarray:
    """Literal multi-head attention on one (T, C) token matrix, scalar loops."""
    t, c = x.shape
    d = c // heads
    q, k, v = x @ wq, x @ wk, x @ wv
    concat = np.zeros((t, c))
    for hd in range(heads):
        sl = slice(hd * d, (hd + 1) * d)
        for i in range(t):
            scores = []
            for j in range(t):
                s = 0.0
                for e in range(d):
                    s += q[i, sl][e] * k[j, sl][e]
                scores.append(s / math.sqrt(d))
            m = max(scores)
            ex = [math.exp(s - m) for s in scores]
            tot = sum(ex)
            for e in range(d):
                concat[i, hd * d + e] = sum(ex[j] / tot * v[j, sl][e] for j in range(t))
    return concat @ wo


def layer_norm_moments(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    flat = x.reshape(-1, x.shape[-1])
    means = np.array([sum(row) / len(row) for row in flat])
    vars_ = np.array([sum((v - mu) ** 2 for v in row) / len(row) for row, mu in zip(flat, means)])
    return means, vars_


def ssim(x: np.ndarray, y: np.ndarray, window=11, sigma=1.5, c1=1e-4, c2=9e-4) -> float:
    """Per-window Gaussian-weighted SSIM, valid windows, averaged over windows and channels."""
    r = [i - (window - 1) / 2 for i in range(window)]
    g = [math.exp(-(v * v) / (2 * sigma * sigma)) for v in r]
    s = sum(g)
    g = [v / s for v in g]
    n, h, w, c = x.shape
    vals = []
    for bi in range(n):
        for ch in range(c):
            for oy in range(h - window + 1):
                for ox in range(w - window + 1):
                    mx = my = sxx = syy = sxy = 0.0
                    for ky in range(window):
                        for kx in range(window):
                            wt = g[ky] * g[kx]
                            a = float(x[bi, oy + ky, ox + kx, ch])
                            b = float(y[bi, oy + ky, ox + kx, ch])
                            mx += wt * a
                            my += wt * b
                            sxx += wt * a * a
                            syy += wt * b * b
                            sxy += wt * a * b
                    vx, vy, cov = sxx - mx * mx, syy - my * my, sxy - mx * my
                    vals.append(((2 * mx * my + c1) * (2 * cov + c2))
                                / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return sum(vals) / len(vals)


def mse(x, y) -> float:
    a, b = np.asarray(x).ravel(), np.asarray(y).ravel()
    return sum((float(p) - float(q)) ** 2 for p, q in zip(a, b)) / len(a)


def mae100(x, y) -> float:
    a, b = np.asarray(x).ravel(), np.asarray(y).ravel()
    return 100.0 * sum(abs(float(p) - float(q)) for p, q in zip(a, b)) / len(a)


def psnr(x, y) -> float:
    e = mse(x, y)
    return 100.0 if e == 0 else 10.0 * math.log10(1.0 / e)


def composite(pred, degraded, mask) -> np.ndarray:
    out = np.empty_like(degraded)
    n, h, w, c = degraded.shape
    for bi in range(n):
        for y in range(h):
            for x in range(w):
                src = pred if mask[bi, y, x, 0] == 1 else degraded
                for ch in range(c):
                    out[bi, y, x, ch] = src[bi, y, x, ch]
    return out


def max_pool_mask(m: np.ndarray) -> np.ndarray:
    n, h, w, _ = m.shape
    out = np.zeros((n, h // 2, w // 2, 1), dtype=m.dtype)
    for bi in range(n):
        for y in range(h // 2):
            for x in range(w // 2):
                out[bi, y, x, 0] = max(m[bi, 2 * y + a, 2 * x + b, 0] for a in (0, 1) for b in (0, 1))
    return out


def channel_reductions(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, h, w, c = x.shape
    mean = np.zeros((n, h, w, 1))
    mx = np.zeros((n, h, w, 1))
    for idx in np.ndindex(n, h, w):
        vals = [float(x[idx + (ch,)]) for ch in range(c)]
        mean[idx + (0,)] = sum(vals) / c
        mx[idx + (0,)] = max(vals)
    return mean, mx


def adamw_scalar(p, g, steps, lr, b1=0.9, b2=0.999, eps=1e-8, wd=0.01) -> float:
    """Hand-stepped one-variable AdamW with a constant gradient."""
    m = v = 0.0
    for t in range(1, steps + 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        p = p - lr * (mh / (math.sqrt(vh) + eps) + wd * p)
    return p


def dft_bin(x2d: np.ndarray, u: int, v: int) -> complex:
    h, w = x2d.shape
    return sum(complex(x2d[a, b]) * cmath.exp(-2j * math.pi * (u * a / h + v * b / w))
               for a in range(h) for b in range(w))
