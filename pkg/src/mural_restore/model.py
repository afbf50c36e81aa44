"""The U-shaped mask-aware restoration network."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ops
from .cfa import CFA
from .fft import is_power_of_two
from .mauds import MADS, MAUS, SamplingBlockDown, SamplingBlockUp, build_mask_pyramid
from .nn import Conv2d, Module, RestormerBlock
from .tensor import Tensor, resolve_dtype

STAGES = 3


@dataclass(frozen=True)
class ModelConfig:
    base_channels: int = 8
    stage_depths: tuple[int, int, int] = (1, 1, 2)
    heads: tuple[int, int, int] | None = None
    window: int = 4
    enable_mauds: bool = True
    enable_cfa: bool = True
    input_size: int = 32
    precision: str = "single"
    ffn_expansion: int = 2
    cffb_reduction: int = 4
    sffb_kernel: int = 7

    def __post_init__(self):
        object.__setattr__(self, "stage_depths", tuple(int(d) for d in self.stage_depths))
        if self.heads is not None:
            object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))

    @property
    def stage_heads(self) -> tuple[int, ...]:
        if self.heads is not None:
            return self.heads
        return tuple(max(1, self.base_channels * 2 ** s // 8) for s in range(STAGES))

    def widths(self) -> list[int]:
        return [self.base_channels * 2 ** s for s in range(STAGES)]

    def validate(self) -> None:
        c, h = self.base_channels, self.input_size
        if c < 2 or c % 2:
            raise ValueError(f"base_channels must be even, got {c}")
        if len(self.stage_depths) != STAGES or min(self.stage_depths) < 1:
            raise ValueError(f"stage_depths must be {STAGES} positive ints, got {self.stage_depths}")
        if len(self.stage_heads) != STAGES:
            raise ValueError(f"heads must list {STAGES} values")
        for width, heads in zip(self.widths(), self.stage_heads):
            if width % heads:
                raise ValueError(f"heads={heads} does not divide stage width {width}")
        if not is_power_of_two(h) or h < 4:
            raise ValueError(f"input_size must be a power of two >= 4, got {h}")
        if self.enable_cfa and (h % self.window or (h // 4) % self.window):
            raise ValueError(
                f"window {self.window} must divide input_size {h} and bottleneck size {h // 4}")
        resolve_dtype(self.precision)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage_depths"] = list(self.stage_depths)
        d["heads"] = None if self.heads is None else list(self.heads)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["stage_depths"] = tuple(d["stage_depths"])
        if d.get("heads") is not None:
            d["heads"] = tuple(d["heads"])
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class Stage(Module):
    def __init__(self, c: int, depth: int, heads: int, rng, dtype, expansion: int):
        self.blocks = [RestormerBlock(c, heads, rng, dtype, expansion) for _ in range(depth)]

    def __call__(self, x: Tensor) -> Tensor:
        for blk in self.blocks:
            x = blk(x)
        return x


class RestorationModel(Module):
    """Head conv -> 3 encoder stages (MADS between) -> mirrored decoder (MAUS between,
    concat skip + 1x1 fuse) -> tail conv.  CFA follows encoder stage 0 and the bottleneck."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        config.validate()
        self.config = config
        dtype = resolve_dtype(config.precision)
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        w = config.widths()
        heads = config.stage_heads
        exp = config.ffn_expansion
        d = config.stage_depths

        self.head = Conv2d(4, w[0], 3, rng, dtype)
        self.enc = [Stage(w[s], d[s], heads[s], rng, dtype, exp) for s in range(STAGES)]
        if config.enable_mauds:
            self.down = [MADS(w[s], rng, dtype) for s in range(STAGES - 1)]
            self.up = [MAUS(w[s + 1], rng, dtype) for s in range(STAGES - 1)]
        else:
            self.down = [SamplingBlockDown(w[s], rng, dtype) for s in range(STAGES - 1)]
            self.up = [SamplingBlockUp(w[s + 1], rng, dtype, out_channels=w[s])
                       for s in range(STAGES - 1)]
        if config.enable_cfa:
            cfa_args = dict(window=config.window, reduction=config.cffb_reduction,
                            kernel=config.sffb_kernel)
            self.cfa_high = CFA(w[0], heads[0], rng, dtype, **cfa_args)
            self.cfa_low = CFA(w[-1], heads[-1], rng, dtype, **cfa_args)
        self.fuse = [Conv2d(2 * w[s], w[s], 1, rng, dtype) for s in range(STAGES - 1)]
        self.dec = [Stage(w[s], d[s], heads[s], rng, dtype, exp) for s in range(STAGES - 1)]
        self.tail = Conv2d(w[0], 3, 3, rng, dtype)
        self.assign_names()

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def _resample_down(self, s, x, masks):
        return self.down[s](x, masks[s]) if self.config.enable_mauds else self.down[s](x)

    def _resample_up(self, s, x, masks):
        return self.up[s](x, masks[s + 1]) if self.config.enable_mauds else self.up[s](x)

    def __call__(self, degraded, mask) -> Tensor:
        degraded = Tensor(degraded.data if isinstance(degraded, Tensor) else degraded,
                          dtype=self.dtype)
        mask = Tensor(mask.data if isinstance(mask, Tensor) else mask, dtype=self.dtype)
        if degraded.ndim != 4 or degraded.shape[-1] != 3:
            raise ValueError(f"degraded must be N x H x W x 3, got {degraded.shape}")
        if mask.shape != degraded.shape[:-1] + (1,):
            raise ValueError(f"mask shape {mask.shape} does not match image {degraded.shape}")
        h = degraded.shape[1]
        if h % 4 or degraded.shape[2] % 4:
            raise ValueError(f"spatial dims must be divisible by 4, got {degraded.shape[1:3]}")
        masks = build_mask_pyramid(mask, STAGES)

        x = self.head(ops.concat((degraded, mask), axis=-1))
        skips = []
        for s in range(STAGES):
            x = self.enc[s](x)
            if s == 0 and self.config.enable_cfa:
                x = self.cfa_high(x, masks[0])
            if s < STAGES - 1:
                skips.append(x)
                x = self._resample_down(s, x, masks)
        if self.config.enable_cfa:
            x = self.cfa_low(x, masks[-1])
        for s in reversed(range(STAGES - 1)):
            x = self._resample_up(s, x, masks)
            x = self.fuse[s](ops.concat((skips[s], x), axis=-1))
            x = self.dec[s](x)
        return self.tail(x)


def build(config: ModelConfig, seed: int = 0) -> RestorationModel:
    return RestorationModel(config, seed)


def forward(model: RestorationModel, degraded, mask) -> Tensor:
    return model(degraded, mask)


def composite(pred, degraded, mask) -> np.ndarray:
    """mask * pred + (1 - mask) * degraded, taking valid pixels verbatim."""
    pred = pred.data if isinstance(pred, Tensor) else np.asarray(pred)
    degraded = degraded.data if isinstance(degraded, Tensor) else np.asarray(degraded)
    mask = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
    if pred.shape != degraded.shape or mask.shape[:-1] != pred.shape[:-1]:
        raise ValueError(f"composite shape mismatch: {pred.shape}, {degraded.shape}, {mask.shape}")
    return np.where(mask > 0.5, pred, degraded).astype(degraded.dtype)
