"""AdamW with decoupled weight decay and a cosine-annealed learning rate."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import Parameter

DEFAULT_LR = 2e-4


@dataclass
class AdamWState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    lr: float = DEFAULT_LR
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class AdamW:
    def __init__(self, params: list[Parameter], lr: float = DEFAULT_LR, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01):
        self.params = [p for p in params if p.trainable]
        names = [p.name for p in self.params]
        if len(set(names)) != len(names) or "" in names:
            raise ValueError("AdamW needs uniquely named parameters")
        self.state = AdamWState(beta1=betas[0], beta2=betas[1], eps=eps,
                                weight_decay=weight_decay, lr=lr)
        for p in self.params:
            self.state.m[p.name] = np.zeros_like(p.data)
            self.state.v[p.name] = np.zeros_like(p.data)

    def step(self, lr: float | None = None) -> None:
        if not self.params:
            raise ValueError("AdamW.step called with no parameters")
        st = self.state
        lr = st.lr if lr is None else lr
        st.t += 1
        b1, b2 = st.beta1, st.beta2
        c1 = 1.0 - b1 ** st.t
        c2 = 1.0 - b2 ** st.t
        for p in self.params:
            g = p.grad
            m = st.m[p.name]
            v = st.v[p.name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            m_hat = m / c1
            v_hat = v / c2
            update = m_hat / (np.sqrt(v_hat) + st.eps) + st.weight_decay * p.data
            p.data -= (lr * update).astype(p.dtype)


def adamw_step(params: list[Parameter], optimizer: AdamW, lr: float | None = None) -> None:
    if [id(p) for p in params] != [id(p) for p in optimizer.params]:
        raise ValueError("parameter list does not match the optimizer's")
    optimizer.step(lr)


@dataclass(frozen=True)
class ScheduleConfig:
    total_steps: int
    lr0: float = DEFAULT_LR
    lr_min: float = 1e-6


def cosine_lr(t: int, cfg: ScheduleConfig) -> float:
    """lr_min + (lr0 - lr_min) * (1 + cos(pi t / T)) / 2 for 0 <= t <= T."""
    if t < 0 or t > cfg.total_steps:
        raise ValueError(f"step {t} outside [0, {cfg.total_steps}]")
    if cfg.total_steps == 0:
        return cfg.lr0
    return cfg.lr_min + (cfg.lr0 - cfg.lr_min) * (1.0 + math.cos(math.pi * t / cfg.total_steps)) / 2.0
