"""Oracle and gradient certification suites (used by ``mural_restore check`` and the tests)."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ops, oracles
from .autodiff import finite_diff_report
from .cfa import CFA, CFFB, SFFB
from .losses import ssim_loss, total_loss
from .mauds import MADS, MAUS
from .model import ModelConfig, RestorationModel
from .nn import FFN, MHSA, LayerNorm, MaxVitBlock, Module, RestormerBlock
from .tensor import Parameter, Tensor

GRAD_TOL = 1e-4
FD_STEP = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    detail: str = ""

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark}  {self.name:<34} {self.value:12.3e}  {self.detail}"


def _rand(rng, shape, lo=-1.0, hi=1.0):
    return rng.uniform(lo, hi, size=shape)


def _mask(rng, shape):
    m = (rng.random(shape) < 0.3).astype(np.float64)
    m.reshape(-1)[0] = 1.0
    return Tensor(m)


def _probe(out: Tensor, rng) -> Tensor:
    # random projection keeps every output entry in play
    w = Tensor(rng.standard_normal(out.shape))
    return ops.sum(ops.mul(out, w))


def _block_case(name, make_block, in_shape, with_mask=False, max_entries=256):
    def build(seed):
        rng = np.random.default_rng(seed)
        block = make_block(rng)
        x = Parameter(_rand(rng, in_shape), name="input")
        mask = _mask(rng, in_shape[:-1] + (1,)) if with_mask else None
        proj_rng = np.random.default_rng(seed + 1)
        out_shape = (block(x, mask) if with_mask else block(x)).shape
        w = Tensor(proj_rng.standard_normal(out_shape))

        def f():
            y = block(x, mask) if with_mask else block(x)
            return ops.sum(ops.mul(y, w))
        named = list(block.named_parameters()) if isinstance(block, Module) else []
        for n, p in named:
            p.name = n
        return f, [x] + [p for _, p in named], max_entries
    return name, build


def _ssim_case(seed):
    rng = np.random.default_rng(seed)
    img = Parameter(rng.uniform(0, 1, (1, 16, 16, 1)), name="image")
    target = Tensor(rng.uniform(0, 1, (1, 16, 16, 1)))
    return (lambda: ssim_loss(target, img)), [img], 256


def _total_case(seed):
    rng = np.random.default_rng(seed)
    img = Parameter(rng.uniform(0, 1, (1, 16, 16, 3)), name="image")
    target = Tensor(rng.uniform(0, 1, (1, 16, 16, 3)))
    return (lambda: total_loss(target, img)), [img], 256


def _model_case(seed, max_entries=8):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(base_channels=4, input_size=16, precision="double")
    model = RestorationModel(cfg, seed)
    clean = rng.uniform(0, 1, (1, 16, 16, 3))
    mask = (rng.random((1, 16, 16, 1)) < 0.25).astype(np.float64)
    degraded = clean * (1 - mask)
    target = Tensor(clean)

    def f():
        return total_loss(target, model(degraded, mask))
    return f, model.parameters(), max_entries


D = "double"
GRAD_CASES: list[tuple[str, Callable]] = [
    _block_case("layer_norm", lambda r: LayerNorm(4, D), (1, 4, 4, 4)),
    _block_case("mhsa", lambda r: MHSA(4, 2, r, D), (1, 4, 4, 4)),
    _block_case("ffn", lambda r: FFN(4, r, D), (1, 4, 4, 4)),
    _block_case("restormer_block", lambda r: RestormerBlock(4, 2, r, D), (1, 4, 4, 4)),
    _block_case("maxvit_block", lambda r: MaxVitBlock(4, 2, r, D, window=4), (1, 8, 8, 4)),
    _block_case("maus", lambda r: MAUS(4, r, D), (1, 4, 4, 4), with_mask=True),
    _block_case("mads", lambda r: MADS(4, r, D), (1, 8, 8, 4), with_mask=True),
    _block_case("cffb", lambda r: CFFB(4, r, D), (1, 8, 8, 4)),
    _block_case("sffb", lambda r: SFFB(r, D), (1, 8, 8, 4)),
    _block_case("cfa", lambda r: CFA(4, 1, r, D, window=4), (1, 8, 8, 4), with_mask=True,
                max_entries=32),
    ("ssim_loss", _ssim_case),
    ("total_loss", _total_case),
    ("full_model_c4_16x16", _model_case),
]


def grad_suite(names=None, seed: int = 0, h: float = FD_STEP, tol: float = GRAD_TOL,
               echo=None) -> list[CheckResult]:
    results = []
    for name, build in GRAD_CASES:
        if names is not None and name not in names:
            continue
        t0 = time.time()
        f, params, max_entries = build(seed)
        report = finite_diff_report(f, params, h=h, max_entries=max_entries, seed=seed)
        worst_name = max(report, key=report.get)
        worst = report[worst_name]
        res = CheckResult(f"grad:{name}", worst < tol, worst,
                          f"worst at {worst_name} ({time.time() - t0:.1f}s)")
        results.append(res)
        if echo:
            echo(res.line())
    return results


# ---------------------------------------------------------------- oracle suite

def _rel(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def conv_oracle_errors(precision: str, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    dt = np.float32 if precision == "single" else np.float64
    worst = 0.0
    for h in (3, 5, 6):
        for cin, cout, groups in ((2, 2, 1), (4, 2, 2), (4, 4, 4), (3, 6, 3)):
            for k, pad, stride in ((1, 0, 1), (3, 1, 1), (3, 0, 2)):
                x = rng.standard_normal((2, h, h, cin)).astype(dt)
                w = rng.standard_normal((cout, cin // groups, k, k)).astype(dt)
                b = rng.standard_normal(cout).astype(dt)
                got = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), stride, pad, groups).data
                worst = max(worst, _rel(got, oracles.conv2d(x, w, b, stride, pad, groups)))
    return worst


def matmul_oracle_errors(precision: str, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    dt = np.float32 if precision == "single" else np.float64
    worst = 0.0
    for bsz, m, k, n in ((1, 2, 3, 2), (4, 5, 6, 2), (3, 6, 6, 6), (2, 1, 4, 5)):
        a = rng.standard_normal((bsz, m, k)).astype(dt)
        b = rng.standard_normal((bsz, k, n)).astype(dt)
        worst = max(worst, _rel(ops.matmul(Tensor(a), Tensor(b)).data, oracles.matmul(a, b)))
    return worst


def mhsa_oracle_errors(precision: str, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for hw, c, heads in ((2, 4, 2), (3, 6, 3), (2, 6, 1), (1, 4, 2)):
        block = MHSA(c, heads, rng, precision)
        x = rng.standard_normal((1, hw, hw, c)).astype(block.wq.dtype)
        got = block(Tensor(x)).data.reshape(hw * hw, c)
        ref = oracles.mhsa(x.reshape(hw * hw, c).astype(np.float64), block.wq.data.astype(float),
                           block.wk.data.astype(float), block.wv.data.astype(float),
                           block.wo.data.astype(float), heads)
        worst = max(worst, _rel(got, ref))
    return worst


def fft_oracle_errors(precision: str, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    dt = np.float32 if precision == "single" else np.float64
    worst = 0.0
    for h, w in ((1, 1), (2, 4), (4, 4), (8, 8), (16, 8), (16, 16)):
        x = rng.standard_normal((1, h, w, 2)).astype(dt)
        z = ops.fft2(Tensor(x))
        worst = max(worst, _rel(z.to_numpy(), oracles.dft2(x.astype(np.float64))))
    return worst


def fft_roundtrip_error(precision: str, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    dt = np.float32 if precision == "single" else np.float64
    worst = 0.0
    for s in (2, 4, 8, 16):
        x = rng.standard_normal((2, s, s, 3)).astype(dt)
        y = ops.ifft2(ops.fft2(Tensor(x))).data
        worst = max(worst, float(np.max(np.abs(y.astype(np.float64) - x.astype(np.float64)))))
    return worst


ORACLE_TOL = {"single": 1e-5, "double": 1e-10}


def shape_sweep() -> tuple[int, int]:
    """(failures, cases) for the MAUS / MADS shape laws."""
    fails = cases = 0
    rng = np.random.default_rng(0)
    for h in (8, 16, 32):
        for w in (8, 16, 32):
            for c in (4, 8, 16):
                x = Tensor(rng.standard_normal((1, h, w, c)).astype(np.float32))
                m = Tensor((rng.random((1, h, w, 1)) < 0.3).astype(np.float32))
                up = MAUS(c, rng, "single")(x, m)
                down = MADS(c, rng, "single")(x, m)
                cases += 2
                fails += up.shape != (1, 2 * h, 2 * w, c // 2)
                fails += down.shape != (1, h // 2, w // 2, 2 * c)
    return fails, cases


def ops_suite(echo=None) -> list[CheckResult]:
    results = []

    def add(res):
        results.append(res)
        if echo:
            echo(res.line())

    for prec in ("single", "double"):
        tol = ORACLE_TOL[prec]
        for name, fn in (("conv2d", conv_oracle_errors), ("matmul", matmul_oracle_errors),
                         ("mhsa", mhsa_oracle_errors), ("fft2", fft_oracle_errors)):
            err = fn(prec)
            add(CheckResult(f"oracle:{name}:{prec}", err < tol, err, f"tol {tol:g}"))
    rt_single, rt_double = fft_roundtrip_error("single"), fft_roundtrip_error("double")
    add(CheckResult("fft_roundtrip:single", rt_single < 1e-5, rt_single, "tol 1e-5"))
    add(CheckResult("fft_roundtrip:double", rt_double < 1e-11, rt_double, "tol 1e-11"))
    add(CheckResult("fft_roundtrip:double<single", rt_double < rt_single, rt_single - rt_double,
                    "precision ordering"))
    fails, cases = shape_sweep()
    add(CheckResult("shape_sweep:maus_mads", fails == 0, float(fails), f"{cases} cases"))
    return results
