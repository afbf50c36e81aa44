"""Paired augmentation and the deterministic training loop."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint as ckpt_io
from .autodiff import Tape
from .losses import LossWeights, SsimConfig, loss_terms, mae, psnr, ssim_value
from .model import RestorationModel, composite
from .optim import AdamW, ScheduleConfig, cosine_lr


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class AugmentParams:
    top: int = 0
    left: int = 0
    flip_h: bool = False
    flip_v: bool = False
    rot90: int = 0

    @classmethod
    def draw(cls, rng: np.random.Generator, size: int, crop: int) -> "AugmentParams":
        if crop > size:
            raise ValueError(f"crop {crop} larger than input {size}")
        top, left = rng.integers(0, size - crop + 1, 2)
        return cls(int(top), int(left), bool(rng.integers(2)), bool(rng.integers(2)),
                   int(rng.integers(4)))

    def apply(self, arr: np.ndarray, crop: int) -> np.ndarray:
        out = arr[self.top:self.top + crop, self.left:self.left + crop]
        if self.flip_h:
            out = out[:, ::-1]
        if self.flip_v:
            out = out[::-1]
        return np.ascontiguousarray(np.rot90(out, self.rot90, axes=(0, 1)))


def augment(img: np.ndarray, mask: np.ndarray, seed, crop: int | None = None):
    """Same random crop / flip / 90-degree rotation for an (H, W, C) image and its mask."""
    h, w = img.shape[:2]
    if h != w or mask.shape[:2] != (h, w):
        raise ValueError(f"augment needs square, matching inputs, got {img.shape} and {mask.shape}")
    crop = h if crop is None else crop
    params = AugmentParams.draw(np.random.default_rng(seed), h, crop)
    return params.apply(img, crop), params.apply(mask, crop)


@dataclass
class TrainConfig:
    steps: int = 500
    batch_size: int = 4
    seed: int = 0
    lr: float = 2e-4
    lr_min: float = 1e-6
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    ssim_weight: float = 0.4
    augment: bool = False
    crop: int | None = None
    checkpoint_every: int = 0


@dataclass
class TrainState:
    model: RestorationModel
    optimizer: AdamW
    step: int = 0
    records: list[dict] = field(default_factory=list)


def batch_indices(seed: int, step: int, batch: int, n: int) -> list[int]:
    """Sample indices for ``step``: consecutive slices of a per-epoch permutation."""
    out = []
    for j in range(batch):
        pos = step * batch + j
        perm = np.random.default_rng([seed, 7, pos // n]).permutation(n)
        out.append(int(perm[pos % n]))
    return out


def make_batch(cfg: TrainConfig, step: int, clean, mask):
    idx = batch_indices(cfg.seed, step, cfg.batch_size, len(clean))
    cs, ms = [], []
    for j, i in enumerate(idx):
        c, m = clean[i], mask[i]
        if cfg.augment:
            c, m = augment(c, m, [cfg.seed, 11, step, j], cfg.crop)
        cs.append(c)
        ms.append(m)
    c = np.stack(cs)
    m = np.stack(ms)
    return c, m, c * (1.0 - m)


def new_state(model: RestorationModel, cfg: TrainConfig) -> TrainState:
    opt = AdamW(model.parameters(), lr=cfg.lr, betas=cfg.betas, eps=cfg.eps,
                weight_decay=cfg.weight_decay)
    return TrainState(model, opt)


def _diagnose(tape: Tape) -> str:
    node = tape.first_non_finite()
    if node is None:
        return "no non-finite intermediate found"
    idx = tape.nodes.index(node)
    names = [getattr(t, "name", "") for t in node.inputs if getattr(t, "name", "")]
    extra = f" (inputs: {', '.join(names)})" if names else ""
    return f"first non-finite tensor: output of '{node.op}' at node {idx}, shape {node.output.shape}{extra}"


def train_step(state: TrainState, cfg: TrainConfig, clean, mask) -> dict:
    t = state.step
    sched = ScheduleConfig(cfg.steps, cfg.lr, cfg.lr_min)
    lr = cosine_lr(t, sched)
    c, m, d = make_batch(cfg, t, clean, mask)
    dtype = state.model.dtype
    target = c.astype(dtype)
    with Tape() as tape:
        pred = state.model(d.astype(dtype), m.astype(dtype))
        mse, sl, total = loss_terms(target, pred, LossWeights(cfg.ssim_weight), SsimConfig())
    value = float(total.data)
    if not np.isfinite(value):
        raise NonFiniteLossError(f"loss is {value} at step {t + 1}; {_diagnose(tape)}")
    tape.backward(total, state.optimizer.params)
    state.optimizer.step(lr)
    state.step += 1
    rec = {"step": state.step, "lr": lr, "mse": float(mse.data), "ssim_loss": float(sl.data),
           "total": value}
    state.records.append(rec)
    return rec


def train_loop(state: TrainState, cfg: TrainConfig, clean: np.ndarray, mask: np.ndarray,
               until: int | None = None, log=None, checkpoint_path=None) -> TrainState:
    """Run steps ``state.step .. until`` (default: cfg.steps)."""
    if len(clean) == 0:
        raise ValueError("empty dataset")
    until = cfg.steps if until is None else until
    while state.step < until:
        rec = train_step(state, cfg, clean, mask)
        if log is not None:
            log(rec)
        if checkpoint_path and cfg.checkpoint_every and state.step % cfg.checkpoint_every == 0:
            ckpt_io.save(checkpoint_path, train_checkpoint(state))
    return state


def train_checkpoint(state: TrainState) -> ckpt_io.Checkpoint:
    ck = ckpt_io.model_checkpoint(state.model)
    st = state.optimizer.state
    for name in st.m:
        ck.tensors[f"optim.m.{name}"] = st.m[name].copy()
        ck.tensors[f"optim.v.{name}"] = st.v[name].copy()
    ck.kind = "train"
    ck.meta = {"step": state.step, "adam_t": st.t, "beta1": st.beta1, "beta2": st.beta2,
               "eps": st.eps, "weight_decay": st.weight_decay, "lr": st.lr}
    return ck


def resume_state(ck: ckpt_io.Checkpoint, cfg: TrainConfig) -> TrainState:
    if ck.kind != "train":
        raise ckpt_io.CheckpointError("resume needs a training checkpoint")
    model = ckpt_io.restore_model(ck)
    state = new_state(model, cfg)
    st = state.optimizer.state
    st.t = int(ck.meta["adam_t"])
    for name in st.m:
        st.m[name][...] = ck.tensors[f"optim.m.{name}"]
        st.v[name][...] = ck.tensors[f"optim.v.{name}"]
    state.step = int(ck.meta["step"])
    return state


def predict(model: RestorationModel, degraded: np.ndarray, mask: np.ndarray,
            batch: int = 4) -> np.ndarray:
    outs = []
    for i in range(0, len(degraded), batch):
        d = degraded[i:i + batch].astype(model.dtype)
        m = mask[i:i + batch].astype(model.dtype)
        outs.append(model(d, m).data.astype(np.float64))
    return np.concatenate(outs)


def metric_rows(clean: np.ndarray, out: np.ndarray, ids=None) -> tuple[list[dict], dict]:
    """Per-sample PSNR / SSIM / MAE rows and their mean."""
    rows = []
    for i in range(len(clean)):
        rows.append({"id": ids[i] if ids is not None else str(i),
                     "psnr": psnr(clean[i:i + 1], out[i:i + 1]),
                     "ssim": ssim_value(clean[i:i + 1], out[i:i + 1]),
                     "mae": mae(clean[i:i + 1], out[i:i + 1])})
    agg = {"id": "mean", **{k: float(np.mean([r[k] for r in rows])) for k in ("psnr", "ssim", "mae")}}
    return rows, agg


def evaluate(model: RestorationModel, clean, mask, degraded, ids=None) -> tuple[list[dict], dict]:
    """Metrics of the composited, [0, 1]-clipped output."""
    raw = predict(model, degraded, mask)
    out = np.clip(composite(raw, degraded.astype(np.float64), mask.astype(np.float64)), 0.0, 1.0)
    return metric_rows(clean, out, ids)


def dump_records(path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
