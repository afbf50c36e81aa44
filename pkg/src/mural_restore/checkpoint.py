"""Single-file binary checkpoints.

Layout (all integers little-endian)::

    magic     8 bytes  b"MURALRST"
    version   u32      FORMAT_VERSION
    hlen      u32      length of the header
    header    hlen     UTF-8 JSON, sorted keys:
                       {"kind": "model" | "train", "config": {...},
                        "config_digest": str, "meta": {...}}
    count     u32      number of tensor records
    records   count x:
        name_len u16, name (UTF-8)
        dtype    u8    0 = float32, 1 = float64
        ndim     u8
        dims     u32 x ndim
        payload  raw little-endian scalars, row-major

Training checkpoints add the AdamW moments as records named
``optim.m.<param>`` and ``optim.v.<param>``; ``meta`` carries the step and
optimizer hyperparameters.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelConfig, RestorationModel

MAGIC = b"MURALRST"
FORMAT_VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    tensors: dict[str, np.ndarray]
    kind: str = "model"
    meta: dict = field(default_factory=dict)


def encode(ckpt: Checkpoint) -> bytes:
    header = {"kind": ckpt.kind, "config": ckpt.config.to_dict(),
              "config_digest": ckpt.config.digest(), "meta": ckpt.meta}
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(hbytes)), hbytes,
             struct.pack("<I", len(ckpt.tensors))]
    for name, arr in ckpt.tensors.items():
        arr = np.asarray(arr)
        if arr.dtype not in _CODES:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())
    return b"".join(parts)


def decode(blob: bytes) -> Checkpoint:
    try:
        return _decode(blob)
    except CheckpointError:
        raise
    except (struct.error, KeyError, ValueError) as e:
        raise CheckpointError(f"truncated or corrupt checkpoint ({e})") from e


def _decode(blob: bytes) -> Checkpoint:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, hlen = struct.unpack_from("<II", blob, 8)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 16
    header = json.loads(blob[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    config = ModelConfig.from_dict(header["config"])
    if config.digest() != header["config_digest"]:
        raise CheckpointError("config digest mismatch: header config was altered")
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        code, ndim = struct.unpack_from("<BB", blob, pos)
        pos += 2
        dims = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        dt = _DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        arr = np.frombuffer(blob, dtype=dt, count=nbytes // dt.itemsize, offset=pos)
        tensors[name] = arr.reshape(dims).astype(dt.newbyteorder("="))
        pos += nbytes
    if pos != len(blob):
        raise CheckpointError(f"trailing bytes after {count} records")
    return Checkpoint(config, tensors, header["kind"], header["meta"])


def save(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(encode(ckpt))


def load(path) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    return decode(blob)


def model_checkpoint(model: RestorationModel, meta: dict | None = None) -> Checkpoint:
    tensors = {name: p.data.copy() for name, p in model.named_parameters()}
    return Checkpoint(model.config, tensors, "model", dict(meta or {}))


def restore_model(ckpt: Checkpoint, model: RestorationModel | None = None) -> RestorationModel:
    """Load parameters into ``model`` (built from the checkpoint config if omitted)."""
    if model is None:
        model = RestorationModel(ckpt.config)
    elif model.config.digest() != ckpt.config.digest():
        raise CheckpointError(
            f"config mismatch: model {model.config.digest()} vs checkpoint {ckpt.config.digest()}")
    names = dict(model.named_parameters())
    params = {k: v for k, v in ckpt.tensors.items() if not k.startswith("optim.")}
    if set(params) != set(names):
        missing = sorted(set(names) - set(params))[:3]
        extra = sorted(set(params) - set(names))[:3]
        raise CheckpointError(f"parameter set mismatch (missing {missing}, unexpected {extra})")
    for name, p in names.items():
        arr = params[name]
        if arr.shape != p.shape or arr.dtype != p.dtype:
            raise CheckpointError(f"{name}: checkpoint {arr.shape}/{arr.dtype} vs model "
                                  f"{p.shape}/{p.dtype}")
        p.data[...] = arr
    return model
