"""Training objectives (MSE, SSIM, weighted total) and evaluation metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import ShapeError, Tensor

PSNR_CAP = 100.0


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    data_range: float = 1.0
    k1: float = 0.01
    k2: float = 0.03

    @property
    def c1(self) -> float:
        return (self.k1 * self.data_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.data_range) ** 2

    def kernel(self) -> np.ndarray:
        r = np.arange(self.window) - (self.window - 1) / 2
        g = np.exp(-(r ** 2) / (2 * self.sigma ** 2))
        g /= g.sum()
        return np.outer(g, g)


@dataclass(frozen=True)
class LossWeights:
    ssim_weight: float = 0.4

    def __post_init__(self):
        if self.ssim_weight < 0:
            raise ValueError("ssim_weight must be >= 0")


def _pair(x, y, op):
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x))
    y = y if isinstance(y, Tensor) else Tensor(np.asarray(y, dtype=x.dtype))
    if x.shape != y.shape:
        raise ShapeError(f"{op}: shapes differ, {x.shape} vs {y.shape}")
    return x, y


def mse_loss(x, x_hat) -> Tensor:
    x, x_hat = _pair(x, x_hat, "mse_loss")
    return ops.mean(ops.square(ops.sub(x, x_hat)))


def ssim_map(x: Tensor, y: Tensor, cfg: SsimConfig = SsimConfig()) -> Tensor:
    """Per-window SSIM over valid (unpadded) Gaussian windows, per channel."""
    n, h, w, c = x.shape
    if h < cfg.window or w < cfg.window:
        raise ShapeError(f"ssim: image {h}x{w} smaller than the {cfg.window}x{cfg.window} window")
    k = cfg.kernel().astype(x.dtype)
    weight = Tensor(np.broadcast_to(k, (c, 1, cfg.window, cfg.window)).copy())

    def blur(t):
        return ops.conv2d(t, weight, None, stride=1, pad=0, groups=c)

    mu_x, mu_y = blur(x), blur(y)
    mu_xx, mu_yy, mu_xy = ops.square(mu_x), ops.square(mu_y), ops.mul(mu_x, mu_y)
    var_x = ops.sub(blur(ops.square(x)), mu_xx)
    var_y = ops.sub(blur(ops.square(y)), mu_yy)
    cov = ops.sub(blur(ops.mul(x, y)), mu_xy)
    num = ops.mul(ops.add(ops.mul(mu_xy, 2.0), cfg.c1), ops.add(ops.mul(cov, 2.0), cfg.c2))
    den = ops.mul(ops.add(ops.add(mu_xx, mu_yy), cfg.c1), ops.add(ops.add(var_x, var_y), cfg.c2))
    return ops.div(num, den)


def ssim(x, x_hat, cfg: SsimConfig = SsimConfig()) -> Tensor:
    x, x_hat = _pair(x, x_hat, "ssim")
    return ops.mean(ssim_map(x, x_hat, cfg))


def ssim_loss(x, x_hat, cfg: SsimConfig = SsimConfig()) -> Tensor:
    return ops.sub(1.0, ssim(x, x_hat, cfg))


def loss_terms(x, x_hat, weights: LossWeights = LossWeights(), cfg: SsimConfig = SsimConfig()):
    """(mse, ssim_loss, total) with total = mse + weight * ssim_loss."""
    mse = mse_loss(x, x_hat)
    sl = ssim_loss(x, x_hat, cfg)
    total = ops.add(mse, ops.mul(sl, weights.ssim_weight))
    return mse, sl, total


def total_loss(x, x_hat, weights: LossWeights = LossWeights(), cfg: SsimConfig = SsimConfig()) -> Tensor:
    return loss_terms(x, x_hat, weights, cfg)[2]


def _arrays(x, y):
    a = x.data if isinstance(x, Tensor) else np.asarray(x)
    b = y.data if isinstance(y, Tensor) else np.asarray(y)
    if a.shape != b.shape:
        raise ShapeError(f"metric shapes differ, {a.shape} vs {b.shape}")
    return a.astype(np.float64), b.astype(np.float64)


def psnr(x, x_hat) -> float:
    """PSNR in dB for data range 1; identical inputs report the 100 dB cap."""
    a, b = _arrays(x, x_hat)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def mae(x, x_hat) -> float:
    """Mean absolute error on a x100 scale."""
    a, b = _arrays(x, x_hat)
    return float(100.0 * np.mean(np.abs(a - b)))


def ssim_value(x, x_hat, cfg: SsimConfig = SsimConfig()) -> float:
    a, b = _arrays(x, x_hat)
    return float(ssim(Tensor(a), Tensor(b), cfg).data)
