"""Procedural mural-like images, damage masks, PNG files and JSONL manifests."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .fft import is_power_of_two

MASK_KINDS = ("cracks", "strokes", "blotches", "mixed")
COVERAGE_SLACK = 0.02
GRAIN_AMPLITUDE = 0.005
MANIFEST_NAME = "manifest.jsonl"

# pigment-like base colors (ochre, malachite, cinnabar, lapis, cream, umber)
PALETTE = np.array([
    [0.80, 0.62, 0.35],
    [0.36, 0.60, 0.48],
    [0.72, 0.26, 0.20],
    [0.22, 0.32, 0.58],
    [0.92, 0.86, 0.72],
    [0.45, 0.32, 0.22],
])


class MaskGenerationError(RuntimeError):
    pass


class ManifestError(ValueError):
    pass


def _require_size(size: int) -> None:
    if not is_power_of_two(size) or size < 4:
        raise ValueError(f"size must be a power of two >= 4, got {size}")


def _smooth_field(rng: np.random.Generator, size: int, sigma: float) -> np.ndarray:
    f = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
    f -= f.min()
    peak = f.max()
    return f / peak if peak > 0 else f


def _curve_distance(size: int, pts: np.ndarray) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    grid = np.stack([yy.ravel(), xx.ravel()], axis=1).astype(float)
    d2 = ((grid[:, None, :] - pts[None, :, :]) ** 2).sum(-1).min(axis=1)
    return np.sqrt(d2).reshape(size, size)


def gen_clean(seed: int, size: int = 32) -> np.ndarray:
    """Layered procedural texture in [0, 1], shape (size, size, 3)."""
    _require_size(size)
    rng = np.random.default_rng([seed, 0])
    picks = rng.choice(len(PALETTE), size=3, replace=False)
    c0, c1, c2 = PALETTE[picks]
    t1 = _smooth_field(rng, size, size / 6)[..., None]
    t2 = _smooth_field(rng, size, size / 4)[..., None]
    img = c0 * (1 - t1) + c1 * t1
    img = img * (1 - 0.5 * t2) + c2 * (0.5 * t2)

    # dark outline strokes along smooth parametric curves
    for _ in range(rng.integers(1, 4)):
        s = np.linspace(0, 1, 4 * size)
        y0, x0 = rng.uniform(0, size, 2)
        ay, ax = rng.uniform(-size, size, 2)
        fy, fx, phase = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0, 2 * np.pi)
        pts = np.stack([y0 + ay * s + 0.15 * size * np.sin(2 * np.pi * fy * s + phase),
                        x0 + ax * s + 0.15 * size * np.cos(2 * np.pi * fx * s)], axis=1)
        d = _curve_distance(size, pts)
        width = rng.uniform(0.6, 1.2)
        ink = 0.6 * np.exp(-(d ** 2) / (2 * width ** 2))[..., None]
        img = img * (1 - ink) + PALETTE[5] * 0.4 * ink

    grain = ndimage.gaussian_filter(rng.standard_normal((size, size, 1)), 0.5)
    img = img + GRAIN_AMPLITUDE * grain
    return np.clip(img, 0.0, 1.0)


@dataclass(frozen=True)
class MaskSpec:
    kind: str = "mixed"
    coverage_min: float = 0.05
    coverage_max: float = 0.40
    thickness: int = 1
    max_walks: int = 12
    retries: int = 8

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise ValueError(f"mask kind must be one of {MASK_KINDS}, got {self.kind!r}")
        if not 0 < self.coverage_min <= self.coverage_max < 1:
            raise ValueError("need 0 < coverage_min <= coverage_max < 1")


def _disk(radius: int) -> np.ndarray:
    r = np.arange(-radius, radius + 1)
    return (r[:, None] ** 2 + r[None, :] ** 2) <= radius * radius + radius


def _stamp(canvas: np.ndarray, y: int, x: int, disk: np.ndarray) -> None:
    r = disk.shape[0] // 2
    size = canvas.shape[0]
    y0, y1 = max(0, y - r), min(size, y + r + 1)
    x0, x1 = max(0, x - r), min(size, x + r + 1)
    canvas[y0:y1, x0:x1] |= disk[y0 - y + r:y1 - y + r, x0 - x + r:x1 - x + r]


_MOVES = np.array([[-1, -1], [-1, 0], [-1, 1], [0, -1], [0, 1], [1, -1], [1, 0], [1, 1]])


def _cracks(rng, size, target, spec, canvas):
    """Thickened 8-connected random walks, grown until ``target`` coverage."""
    disk = _disk(max(0, spec.thickness - 1))
    max_len = 6 * size
    for _ in range(spec.max_walks):
        y, x = rng.integers(0, size, 2)
        heading = rng.uniform(0, 2 * np.pi)
        for _ in range(max_len):
            _stamp(canvas, y, x, disk)
            if canvas.mean() >= target:
                return canvas
            heading += rng.normal(0, 0.5)
            step = np.array([np.sin(heading), np.cos(heading)])
            move = _MOVES[np.argmax(_MOVES @ step)]
            ny, nx = y + move[0], x + move[1]
            if not (0 <= ny < size and 0 <= nx < size):
                heading += np.pi
                continue
            y, x = ny, nx
    return canvas


def _strokes(rng, size, target, spec, canvas):
    """Thick quadratic-bezier sweeps, stamped point by point."""
    for _ in range(spec.max_walks):
        p0, p1, p2 = rng.uniform(0, size, (3, 2))
        radius = int(rng.integers(1, max(2, size // 16) + 1))
        disk = _disk(radius)
        for s in np.linspace(0, 1, 4 * size):
            pt = (1 - s) ** 2 * p0 + 2 * (1 - s) * s * p1 + s ** 2 * p2
            _stamp(canvas, int(pt[0]), int(pt[1]), disk)
            if canvas.mean() >= target:
                return canvas
    return canvas


def _blotches(rng, size, target, spec, canvas):
    field = _smooth_field(rng, size, size / 10)
    free = ~canvas
    need = int(round(target * size * size)) - int(canvas.sum())
    if need <= 0:
        return canvas
    order = np.argsort(-field[free], kind="stable")
    ys, xs = np.nonzero(free)
    pick = order[:need]
    canvas[ys[pick], xs[pick]] = True
    return canvas


def gen_mask(seed: int, spec: MaskSpec = MaskSpec(), size: int = 32) -> np.ndarray:
    """Binary damage mask (1 = damaged), shape (size, size, 1), float {0, 1}."""
    _require_size(size)
    lo, hi = spec.coverage_min - COVERAGE_SLACK, spec.coverage_max + COVERAGE_SLACK
    last = None
    for attempt in range(spec.retries):
        rng = np.random.default_rng([seed, 1, attempt])
        target = rng.uniform(spec.coverage_min, spec.coverage_max)
        canvas = np.zeros((size, size), dtype=bool)
        if spec.kind == "cracks":
            _cracks(rng, size, target, spec, canvas)
        elif spec.kind == "strokes":
            _strokes(rng, size, target, spec, canvas)
        elif spec.kind == "blotches":
            _blotches(rng, size, target, spec, canvas)
        else:
            _blotches(rng, size, 0.5 * target, spec, canvas)
            _cracks(rng, size, 0.75 * target, spec, canvas)
            _strokes(rng, size, target, spec, canvas)
        last = canvas.mean()
        if lo <= last <= hi:
            return canvas[..., None].astype(np.float64)
    raise MaskGenerationError(
        f"{spec.kind} mask missed coverage [{lo:.2f}, {hi:.2f}] after {spec.retries} "
        f"attempts (last {last:.3f})")


def quantize(img: np.ndarray) -> np.ndarray:
    """[0, 1] floats -> uint8 with round-half-up."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def dequantize(q: np.ndarray) -> np.ndarray:
    return q.astype(np.float64) / 255.0


def write_png(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise ValueError(f"write_png expects uint8, got {arr.dtype}")
    if arr.ndim == 3 and arr.shape[-1] == 1:
        arr = arr[..., 0]
    try:
        Image.fromarray(arr).save(path, format="PNG")
    except OSError as e:
        raise OSError(f"cannot write PNG {path}: {e}") from e


def read_png(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im).copy()
    except OSError as e:
        raise OSError(f"cannot read PNG {path}: {e}") from e


def read_image(path) -> np.ndarray:
    """RGB PNG -> float (H, W, 3) in [0, 1]."""
    q = read_png(path)
    if q.ndim != 3 or q.shape[-1] != 3:
        raise ValueError(f"{path}: expected an RGB image, got shape {q.shape}")
    return dequantize(q)


def read_mask(path) -> np.ndarray:
    """Gray PNG with values {0, 255} -> float (H, W, 1) in {0, 1}."""
    q = read_png(path)
    if q.ndim != 2:
        raise ValueError(f"{path}: expected a single-channel mask, got shape {q.shape}")
    if not np.all((q == 0) | (q == 255)):
        raise ValueError(f"{path}: mask PNG must contain only 0 and 255")
    return (q == 255).astype(np.float64)[..., None]


def mask_to_png(mask: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(mask)[..., 0] > 0.5, 255, 0).astype(np.uint8)


def degrade(clean_q: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero damaged pixels of a uint8 image."""
    return np.where(mask > 0.5, 0, clean_q).astype(np.uint8)


@dataclass
class SampleRecord:
    id: str
    seed: int
    clean_path: str
    mask_path: str
    degraded_path: str
    coverage: float


def make_sample(seed: int, size: int, spec: MaskSpec, out_dir, sample_id: str) -> SampleRecord:
    out_dir = Path(out_dir)
    clean_q = quantize(gen_clean(seed, size))
    mask = gen_mask(seed, spec, size)
    degraded_q = degrade(clean_q, mask)
    names = {k: f"{sample_id}_{k}.png" for k in ("clean", "mask", "degraded")}
    write_png(out_dir / names["clean"], clean_q)
    write_png(out_dir / names["mask"], mask_to_png(mask))
    write_png(out_dir / names["degraded"], degraded_q)
    return SampleRecord(sample_id, int(seed), names["clean"], names["mask"], names["degraded"],
                        float(mask.mean()))


def sample_seed(root_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([root_seed, index]).generate_state(1)[0])


def generate_dataset(out_dir, count: int, size: int, seed: int,
                     spec: MaskSpec = MaskSpec()) -> list[SampleRecord]:
    _require_size(size)
    if count < 1:
        raise ValueError("count must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = [make_sample(sample_seed(seed, i), size, spec, out_dir, f"s{i:05d}")
               for i in range(count)]
    write_manifest(out_dir / MANIFEST_NAME, records)
    return records


def write_manifest(path, records: list[SampleRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r), sort_keys=True) + "\n")


def read_manifest(path) -> list[SampleRecord]:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    records = []
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from e
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            records.append(SampleRecord(**json.loads(line)))
        except (TypeError, json.JSONDecodeError) as e:
            raise ManifestError(f"{path}:{n}: bad manifest record ({e})") from e
    return records


def load_sample(record: SampleRecord, root) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(clean, mask, degraded) float arrays; checks the recorded coverage."""
    root = Path(root)
    clean = read_image(root / record.clean_path)
    mask = read_mask(root / record.mask_path)
    degraded = read_image(root / record.degraded_path)
    if abs(mask.mean() - record.coverage) > 1e-9:
        raise ManifestError(
            f"{record.id}: mask coverage {mask.mean():.6f} != manifest {record.coverage:.6f}")
    return clean, mask, degraded


def load_dataset(root) -> tuple[list[SampleRecord], np.ndarray, np.ndarray, np.ndarray]:
    root = Path(root)
    if root.is_file():
        root = root.parent
    records = read_manifest(root)
    if not records:
        raise ManifestError(f"{root}: empty manifest")
    triples = [load_sample(r, root) for r in records]
    clean, mask, degraded = (np.stack(a) for a in zip(*triples))
    return records, clean, mask, degraded


def directory_digest(root) -> str:
    """SHA-256 over sorted (relative path, bytes) of every file under ``root``."""
    h = hashlib.sha256()
    root = Path(root)
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(os.fsencode(str(p.relative_to(root))))
            h.update(p.read_bytes())
    return h.hexdigest()
