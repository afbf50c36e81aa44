"""INI run files: one file fixes the model, schedule, optimizer, loss, masks and seed.

Example::

    [model]
    base_channels = 8
    stage_depths = 1, 1, 2
    heads = auto

    [schedule]
    steps = 500

    [train]
    seed = 0

Every key is optional; unknown sections or keys are rejected. See
``docs/config.md`` for the full key list.
"""
from __future__ import annotations

import configparser
import hashlib
import logging
from dataclasses import dataclass, field, replace

from .data import MaskSpec
from .model import ModelConfig
from .train import TrainConfig

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


def _bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _int_tuple(raw: str) -> tuple[int, ...]:
    return tuple(int(p) for p in raw.replace(",", " ").split())


def _heads(raw: str):
    return None if raw.strip().lower() == "auto" else _int_tuple(raw)


def _opt_int(raw: str):
    return None if raw.strip().lower() in ("none", "") else int(raw)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if value is None:
        return "none"
    return repr(value) if isinstance(value, float) else str(value)


# section -> key -> (target object, attribute, parser)
_SCHEMA = {
    "model": {
        "base_channels": ("model", "base_channels", int),
        "stage_depths": ("model", "stage_depths", _int_tuple),
        "heads": ("model", "heads", _heads),
        "window": ("model", "window", int),
        "enable_mauds": ("model", "enable_mauds", _bool),
        "enable_cfa": ("model", "enable_cfa", _bool),
        "input_size": ("model", "input_size", int),
        "precision": ("model", "precision", str),
        "ffn_expansion": ("model", "ffn_expansion", int),
        "cffb_reduction": ("model", "cffb_reduction", int),
        "sffb_kernel": ("model", "sffb_kernel", int),
    },
    "schedule": {
        "steps": ("train", "steps", int),
        "lr": ("train", "lr", float),
        "lr_min": ("train", "lr_min", float),
    },
    "optim": {
        "beta1": ("train", "beta1", float),
        "beta2": ("train", "beta2", float),
        "eps": ("train", "eps", float),
        "weight_decay": ("train", "weight_decay", float),
    },
    "loss": {
        "ssim_weight": ("train", "ssim_weight", float),
    },
    "mask": {
        "kind": ("mask", "kind", str),
        "coverage_min": ("mask", "coverage_min", float),
        "coverage_max": ("mask", "coverage_max", float),
        "thickness": ("mask", "thickness", int),
        "max_walks": ("mask", "max_walks", int),
        "retries": ("mask", "retries", int),
    },
    "train": {
        "seed": ("train", "seed", int),
        "batch_size": ("train", "batch_size", int),
        "augment": ("train", "augment", _bool),
        "crop": ("train", "crop", _opt_int),
        "checkpoint_every": ("train", "checkpoint_every", int),
        "holdout": ("run", "holdout", int),
    },
}


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    mask: MaskSpec = field(default_factory=MaskSpec)
    holdout: int = 0

    def validate(self) -> None:
        self.model.validate()
        t = self.train
        if t.steps < 1:
            raise ConfigError("schedule.steps must be >= 1")
        if t.batch_size < 1:
            raise ConfigError("train.batch_size must be >= 1")
        if not 0 <= t.lr_min <= t.lr:
            raise ConfigError("need 0 <= schedule.lr_min <= schedule.lr")
        if not (0 <= t.betas[0] < 1 and 0 <= t.betas[1] < 1):
            raise ConfigError("optimizer betas must lie in [0, 1)")
        if t.ssim_weight < 0:
            raise ConfigError("loss.ssim_weight must be >= 0")
        if t.crop is not None and t.crop != self.model.input_size:
            raise ConfigError(f"train.crop {t.crop} must equal model.input_size "
                              f"{self.model.input_size}")
        if self.holdout < 0:
            raise ConfigError("train.holdout must be >= 0")

    def _value(self, target: str, attr: str):
        if target == "run":
            return getattr(self, attr)
        if target == "train" and attr in ("beta1", "beta2"):
            return self.train.betas[attr == "beta2"]
        return getattr(getattr(self, target), attr)

    def to_ini(self) -> str:
        """Fully resolved config; parsing it back gives an equal RunConfig."""
        lines = []
        for section, keys in _SCHEMA.items():
            lines.append(f"[{section}]")
            for key, (target, attr, _) in keys.items():
                value = self._value(target, attr)
                text = "auto" if key == "heads" and value is None else _fmt(value)
                lines.append(f"{key} = {text}")
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode("utf-8")).hexdigest()[:16]


def parse(text: str, source: str = "<string>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from e

    updates: dict[str, dict] = {"model": {}, "train": {}, "mask": {}, "run": {}}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key '{key}' in [{section}]")
            target, attr, conv = _SCHEMA[section][key]
            try:
                updates[target][attr] = conv(raw)
            except ValueError as e:
                raise ConfigError(f"{source}: [{section}] {key}: {e}") from e

    tr = updates["train"]
    b1, b2 = tr.pop("beta1", 0.9), tr.pop("beta2", 0.999)
    tr["betas"] = (b1, b2)
    try:
        cfg = RunConfig(model=replace(ModelConfig(), **updates["model"]),
                        train=replace(TrainConfig(), **tr),
                        mask=replace(MaskSpec(), **updates["mask"]),
                        **updates["run"])
        cfg.validate()
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"{source}: {e}") from e
    return cfg


def load(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    cfg = parse(text, str(path))
    log.info("resolved config %s (digest %s):\n%s", path, cfg.digest(), cfg.to_ini())
    return cfg


def known_keys() -> dict[str, list[str]]:
    return {s: list(keys) for s, keys in _SCHEMA.items()}

