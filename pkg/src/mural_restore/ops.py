"""Differentiable primitives on NHWC tensors.

Each public function computes its output with numpy and registers a backward
rule under the same id in :data:`mural_restore.autodiff.VJP`.
"""
from __future__ import annotations

import builtins
import math

import numpy as np
from scipy.special import erf

from .autodiff import VJP, record
from .fft import fft2_raw, ifft2_raw, is_power_of_two
from .tensor import DOUBLE, ComplexTensor, ShapeError, Tensor


def _rule(name):
    def deco(fn):
        VJP[name] = fn
        return fn
    return deco


def _t(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else DOUBLE
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    sa, sb = a.shape[::-1], b.shape[::-1]
    for x, y in zip(sa, sb):
        if x != y and x != 1 and y != 1:
            raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}")


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = _t(a, b if isinstance(b, Tensor) else None), _t(b, a if isinstance(a, Tensor) else None)
    _check_broadcast(a, b, "add")
    return record("add", a.data + b.data, (a, b))


@_rule("add")
def _add_vjp(g, node):
    a, b = node.inputs
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def sub(a, b) -> Tensor:
    a, b = _t(a, b if isinstance(b, Tensor) else None), _t(b, a if isinstance(a, Tensor) else None)
    _check_broadcast(a, b, "sub")
    return record("sub", a.data - b.data, (a, b))


@_rule("sub")
def _sub_vjp(g, node):
    a, b = node.inputs
    return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


def mul(a, b) -> Tensor:
    a, b = _t(a, b if isinstance(b, Tensor) else None), _t(b, a if isinstance(a, Tensor) else None)
    _check_broadcast(a, b, "mul")
    return record("mul", a.data * b.data, (a, b))


@_rule("mul")
def _mul_vjp(g, node):
    a, b = node.inputs
    ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
    gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
    return ga, gb


def div(a, b) -> Tensor:
    a, b = _t(a, b if isinstance(b, Tensor) else None), _t(b, a if isinstance(a, Tensor) else None)
    _check_broadcast(a, b, "div")
    return record("div", a.data / b.data, (a, b))


@_rule("div")
def _div_vjp(g, node):
    a, b = node.inputs
    ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
    gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None
    return ga, gb


def square(x: Tensor) -> Tensor:
    return record("square", x.data * x.data, (x,))


@_rule("square")
def _square_vjp(g, node):
    (x,) = node.inputs
    return (2.0 * g * x.data,)


def sqrt(x: Tensor) -> Tensor:
    return record("sqrt", np.sqrt(x.data), (x,))


@_rule("sqrt")
def _sqrt_vjp(g, node):
    return (g / (2.0 * node.output.data),)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    # split by sign so large |x| never overflows exp
    e = np.exp(-np.abs(d))
    s = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(d.dtype)
    return record("sigmoid", s, (x,))


@_rule("sigmoid")
def _sigmoid_vjp(g, node):
    s = node.output.data
    return (g * s * (1.0 - s),)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf) GELU."""
    d = x.data
    cdf = 0.5 * (1.0 + erf(d / math.sqrt(2.0)))
    return record("gelu", (d * cdf).astype(d.dtype), (x,), cdf=cdf.astype(d.dtype))


@_rule("gelu")
def _gelu_vjp(g, node):
    (x,) = node.inputs
    d = x.data
    pdf = np.exp(-0.5 * d * d) / math.sqrt(2.0 * math.pi)
    return (g * (node.saved["cdf"] + d * pdf),)


# ---------------------------------------------------------------- reductions

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, x.ndim)
    return record("sum", x.data.sum(axis=axes, keepdims=keepdims), (x,),
                  axes=axes, keepdims=keepdims)


@_rule("sum")
def _sum_vjp(g, node):
    (x,) = node.inputs
    if not node.saved["keepdims"]:
        g = np.expand_dims(g, node.saved["axes"])
    return (np.broadcast_to(g, x.shape).copy(),)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return div(sum(x, axis=axes, keepdims=keepdims), float(count))


def max_channels(x: Tensor) -> Tensor:
    """Max over the last (channel) axis, kept as a size-1 axis."""
    idx = np.argmax(x.data, axis=-1)[..., None]
    out = np.take_along_axis(x.data, idx, axis=-1)
    return record("max_channels", out, (x,), idx=idx)


@_rule("max_channels")
def _max_vjp(g, node):
    (x,) = node.inputs
    gx = np.zeros_like(x.data)
    np.put_along_axis(gx, node.saved["idx"], g, axis=-1)
    return (gx,)


def mean_channels(x: Tensor) -> Tensor:
    return mean(x, axis=-1, keepdims=True)


def mean_spatial(x: Tensor) -> Tensor:
    """Mean over H and W of an NHWC tensor, giving N x 1 x 1 x C."""
    return mean(x, axis=(1, 2), keepdims=True)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    d = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(d)
    s = e / e.sum(axis=axis, keepdims=True)
    return record("softmax", s, (x,), axis=axis)


@_rule("softmax")
def _softmax_vjp(g, node):
    s = node.output.data
    ax = node.saved["axis"]
    return (s * (g - (g * s).sum(axis=ax, keepdims=True)),)


def layer_norm(x: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize each position over the channel axis, then apply scale/shift."""
    d = x.data
    mu = d.mean(axis=-1, keepdims=True)
    xc = d - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return record("layer_norm", xhat * scale.data + shift.data, (x, scale, shift),
                  xhat=xhat, inv=inv)


@_rule("layer_norm")
def _layer_norm_vjp(g, node):
    x, scale, shift = node.inputs
    xhat, inv = node.saved["xhat"], node.saved["inv"]
    c = x.shape[-1]
    dxhat = g * scale.data
    gx = inv / c * (c * dxhat - dxhat.sum(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
    lead = tuple(range(x.ndim - 1))
    gscale = (g * xhat).sum(axis=lead).reshape(scale.shape)
    gshift = g.sum(axis=lead).reshape(shift.shape)
    return gx, gscale, gshift


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions disagree for {a.shape} @ {b.shape}")
    return record("matmul", np.matmul(a.data, b.data), (a, b))


@_rule("matmul")
def _matmul_vjp(g, node):
    a, b = node.inputs
    ga = gb = None
    if a.requires_grad:
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
    if b.requires_grad:
        if b.ndim == 2:
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
    return ga, gb


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w (+ b)`` acting on the last axis."""
    y = matmul(x, w)
    return y if b is None else add(y, b)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           pad: int = 0, groups: int = 1) -> Tensor:
    """2-D convolution (cross-correlation) of an NHWC tensor with zero padding.

    ``weight`` has shape (C_out, C_in / groups, k, k).
    """
    n, h, w, cin = x.shape
    cout, cg, k, k2 = weight.shape
    if k != k2:
        raise ShapeError("conv2d: only square kernels are supported")
    if cin % groups or cout % groups:
        raise ShapeError(f"conv2d: channels {cin}->{cout} not divisible by groups={groups}")
    if cg != cin // groups:
        raise ShapeError(f"conv2d: weight expects {cg * groups} input channels, got {cin}")
    if k > h + 2 * pad or k > w + 2 * pad:
        raise ShapeError(f"conv2d: kernel {k} larger than padded input {h + 2 * pad}x{w + 2 * pad}")
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x.data
    wd = weight.data
    og = cout // groups
    out = np.zeros((n, ho, wo, cout), dtype=np.result_type(x.dtype, weight.dtype))
    for dy in range(k):
        for dx in range(k):
            xs = xp[:, dy:dy + stride * (ho - 1) + 1:stride, dx:dx + stride * (wo - 1) + 1:stride, :]
            out += _conv_tap(xs, wd[:, :, dy, dx], groups, cg, og)
    if bias is not None:
        out += bias.data
    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("conv2d", out, inputs, xp=xp, stride=stride, pad=pad, groups=groups,
                  ho=ho, wo=wo)


def _conv_tap(xs, wt, groups, cg, og):
    # xs (n, ho, wo, cin), wt (cout, cg)
    if groups == 1:
        return xs @ wt.T
    n, ho, wo, _ = xs.shape
    if cg == 1 and og == 1:
        return xs * wt[:, 0]
    xg = xs.reshape(n, ho, wo, groups, cg)
    wg = wt.reshape(groups, og, cg)
    return np.einsum("nhwgc,goc->nhwgo", xg, wg).reshape(n, ho, wo, groups * og)


def _conv_tap_back(g, wt, groups, cg, og):
    # inverse map of _conv_tap: g (n, ho, wo, cout) -> (n, ho, wo, cin)
    if groups == 1:
        return g @ wt
    n, ho, wo, _ = g.shape
    if cg == 1 and og == 1:
        return g * wt[:, 0]
    gg = g.reshape(n, ho, wo, groups, og)
    wg = wt.reshape(groups, og, cg)
    return np.einsum("nhwgo,goc->nhwgc", gg, wg).reshape(n, ho, wo, groups * cg)


def _conv_tap_wgrad(g, xs, groups, cg, og):
    # d weight[:, :, dy, dx] -> (cout, cg)
    cout = g.shape[-1]
    g2 = g.reshape(-1, cout)
    x2 = xs.reshape(-1, xs.shape[-1])
    if groups == 1:
        return g2.T @ x2
    if cg == 1 and og == 1:
        return (g2 * x2).sum(axis=0)[:, None]
    gg = g2.reshape(-1, groups, og)
    xg = x2.reshape(-1, groups, cg)
    return np.einsum("mgo,mgc->goc", gg, xg).reshape(cout, cg)


@_rule("conv2d")
def _conv2d_vjp(g, node):
    x, weight = node.inputs[0], node.inputs[1]
    s = node.saved
    xp, stride, pad, groups = s["xp"], s["stride"], s["pad"], s["groups"]
    ho, wo = s["ho"], s["wo"]
    cout, cg, k, _ = weight.shape
    og = cout // groups
    wd = weight.data
    gxp = np.zeros_like(xp) if x.requires_grad else None
    gw = np.zeros_like(wd) if weight.requires_grad else None
    for dy in range(k):
        for dx in range(k):
            sl = (slice(None), slice(dy, dy + stride * (ho - 1) + 1, stride),
                  slice(dx, dx + stride * (wo - 1) + 1, stride), slice(None))
            if gxp is not None:
                gxp[sl] += _conv_tap_back(g, wd[:, :, dy, dx], groups, cg, og)
            if gw is not None:
                gw[:, :, dy, dx] = _conv_tap_wgrad(g, xp[sl], groups, cg, og)
    gx = None
    if gxp is not None:
        h, w = x.shape[1], x.shape[2]
        gx = gxp[:, pad:pad + h, pad:pad + w, :] if pad else gxp
    grads = [gx, gw]
    if len(node.inputs) == 3:
        grads.append(g.sum(axis=(0, 1, 2)))
    return tuple(grads)


# ---------------------------------------------------------------- structural

def reshape(x: Tensor, shape) -> Tensor:
    return record("reshape", x.data.reshape(shape), (x,))


@_rule("reshape")
def _reshape_vjp(g, node):
    return (g.reshape(node.inputs[0].shape),)


def transpose(x: Tensor, perm) -> Tensor:
    perm = tuple(perm)
    return record("transpose", np.ascontiguousarray(x.data.transpose(perm)), (x,), perm=perm)


@_rule("transpose")
def _transpose_vjp(g, node):
    return (g.transpose(np.argsort(node.saved["perm"])),)


def getitem(x: Tensor, index) -> Tensor:
    """Basic (slice/int) indexing."""
    return record("getitem", np.array(x.data[index]), (x,), index=index)


@_rule("getitem")
def _getitem_vjp(g, node):
    (x,) = node.inputs
    gx = np.zeros_like(x.data)
    gx[node.saved["index"]] += g
    return (gx,)


def take(x: Tensor, indices, axis: int = -1) -> Tensor:
    """Gather entries along ``axis``; indices may repeat."""
    indices = np.asarray(indices, dtype=np.int64)
    axis = axis % x.ndim
    n = x.shape[axis]
    if indices.size and (indices.min() < 0 or indices.max() >= n):
        raise ShapeError(f"take: index out of range for axis of length {n}")
    return record("take", np.take(x.data, indices, axis=axis), (x,), indices=indices, axis=axis)


@_rule("take")
def _take_vjp(g, node):
    (x,) = node.inputs
    axis, idx = node.saved["axis"], node.saved["indices"]
    gx = np.zeros_like(np.moveaxis(x.data, axis, 0))
    np.add.at(gx, idx, np.moveaxis(g, axis, 0))
    return (np.moveaxis(gx, 0, axis),)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    ref = tensors[0]
    axis = axis % ref.ndim
    for t in tensors[1:]:
        if t.ndim != ref.ndim or any(
                a != b for i, (a, b) in enumerate(zip(t.shape, ref.shape)) if i != axis):
            raise ShapeError(f"concat: shapes {ref.shape} and {t.shape} disagree off axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    return record("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors,
                  axis=axis, sizes=sizes)


@_rule("concat")
def _concat_vjp(g, node):
    bounds = np.cumsum(node.saved["sizes"])[:-1]
    return tuple(np.split(g, bounds, axis=node.saved["axis"]))


def concat_channels(*tensors) -> Tensor:
    return concat(tensors, axis=-1)


def split_channels(x: Tensor, sizes) -> list[Tensor]:
    if builtins.sum(sizes) != x.shape[-1]:
        raise ShapeError(f"split_channels: sizes {sizes} do not add up to {x.shape[-1]}")
    out, start = [], 0
    for s in sizes:
        out.append(getitem(x, (Ellipsis, slice(start, start + s))))
        start += s
    return out


def select_channels(x: Tensor, indices) -> Tensor:
    return take(x, indices, axis=-1)


def interleave_channels(a: Tensor, b: Tensor) -> Tensor:
    """(a0, b0, a1, b1, ...) for equal channel counts."""
    if a.shape != b.shape:
        raise ShapeError(f"interleave_channels: {a.shape} vs {b.shape}")
    c = a.shape[-1]
    order = np.stack([np.arange(c), np.arange(c) + c], axis=1).reshape(-1)
    return take(concat((a, b), axis=-1), order, axis=-1)


def pad(x: Tensor, p: int) -> Tensor:
    """Zero-pad H and W of an NHWC tensor by ``p`` on every side."""
    return record("pad", np.pad(x.data, ((0, 0), (p, p), (p, p), (0, 0))), (x,), p=p)


@_rule("pad")
def _pad_vjp(g, node):
    p = node.saved["p"]
    h, w = node.inputs[0].shape[1:3]
    return (g[:, p:p + h, p:p + w, :].copy(),)


def crop(x: Tensor, top: int, left: int, height: int, width: int) -> Tensor:
    if top < 0 or left < 0 or top + height > x.shape[1] or left + width > x.shape[2]:
        raise ShapeError(f"crop window exceeds input of shape {x.shape}")
    return getitem(x, (slice(None), slice(top, top + height), slice(left, left + width), slice(None)))


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """N x H x W x C -> N x rH x rW x C/r^2.

    Output channel c at sub-position (dy, dx) reads input channel c*r^2 + dy*r + dx.
    """
    n, h, w, c = x.shape
    if c % (r * r):
        raise ShapeError(f"pixel_shuffle: channels {c} not divisible by {r * r}")
    co = c // (r * r)
    y = reshape(x, (n, h, w, co, r, r))
    y = transpose(y, (0, 1, 4, 2, 5, 3))
    return reshape(y, (n, h * r, w * r, co))


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Inverse of :func:`pixel_shuffle`: N x H x W x C -> N x H/r x W/r x r^2 C."""
    n, h, w, c = x.shape
    if h % r or w % r:
        raise ShapeError(f"pixel_unshuffle: spatial dims {h}x{w} not divisible by {r}")
    y = reshape(x, (n, h // r, r, w // r, r, c))
    y = transpose(y, (0, 1, 3, 5, 2, 4))
    return reshape(y, (n, h // r, w // r, c * r * r))


def channel_shuffle(x: Tensor, groups: int) -> Tensor:
    c = x.shape[-1]
    if c % groups:
        raise ShapeError(f"channel_shuffle: channels {c} not divisible by groups={groups}")
    lead = x.shape[:-1]
    y = reshape(x, (*lead, groups, c // groups))
    y = transpose(y, (*range(len(lead)), len(lead) + 1, len(lead)))
    return reshape(y, (*lead, c))


# ---------------------------------------------------------------- frequency domain

def _check_fft_dims(shape):
    if len(shape) < 3:
        raise ShapeError(f"fft2 expects ... x H x W x C, got {shape}")
    h, w = shape[-3], shape[-2]
    if not (is_power_of_two(h) and is_power_of_two(w)):
        raise ShapeError(f"fft2 needs power-of-two H and W, got {h}x{w}")


def fft2(x: Tensor) -> ComplexTensor:
    """Unnormalized 2-D DFT over H and W, independently per channel."""
    _check_fft_dims(x.shape)
    z = fft2_raw(x.data)
    stacked = np.stack([z.real, z.imag], axis=-1).astype(x.dtype)
    packed = record("fft2", stacked, (x,))
    return ComplexTensor(getitem(packed, (Ellipsis, 0)), getitem(packed, (Ellipsis, 1)))


@_rule("fft2")
def _fft2_vjp(g, node):
    gc = g[..., 0] + 1j * g[..., 1]
    # adjoint of the forward DFT is the unnormalized inverse
    return (np.real(fft2_raw(np.conj(gc))).astype(g.dtype),)


IFFT_IMAG_TOL = {np.dtype(np.float32): 1e-6, np.dtype(np.float64): 1e-10}


def ifft2(z: ComplexTensor) -> Tensor:
    """Inverse of :func:`fft2`; the result must be real up to rounding."""
    _check_fft_dims(z.shape)
    dtype = z.re.dtype
    y = ifft2_raw(z.re.data.astype(DOUBLE) + 1j * z.im.data.astype(DOUBLE))
    scale = max(1.0, float(np.abs(y.real).max()))
    resid = float(np.abs(y.imag).max()) / scale
    if resid >= IFFT_IMAG_TOL[np.dtype(dtype)]:
        raise ValueError(f"ifft2 result is not real: relative imaginary residual {resid:.3e}")
    return record("ifft2", y.real.astype(dtype), (z.re, z.im))


@_rule("ifft2")
def _ifft2_vjp(g, node):
    h, w = g.shape[-3], g.shape[-2]
    gz = fft2_raw(g) / (h * w)
    return np.real(gz).astype(g.dtype), np.imag(gz).astype(g.dtype)


MAG_EPS = 1e-12


def magnitude(z: ComplexTensor) -> Tensor:
    """Smoothed modulus sqrt(re^2 + im^2 + eps) - sqrt(eps).

    Finite gradient at the origin; the offset keeps |0| = 0 exactly.
    """
    return sub(sqrt(add(add(square(z.re), square(z.im)), MAG_EPS)), math.sqrt(MAG_EPS))


def complex_scale(z: ComplexTensor, factor) -> ComplexTensor:
    return ComplexTensor(mul(z.re, factor), mul(z.im, factor))
