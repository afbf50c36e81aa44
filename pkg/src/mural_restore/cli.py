"""Command-line entry point: ``mural-restore {gen-data,train,infer,eval,check,check-grad,selftest}``.

Exit codes: 0 success, 1 validation error (bad flags, config, checkpoint or
manifest), 2 runtime failure (non-finite loss, I/O, failed check suite).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import checks
from . import config as run_config
from .data import (MASK_KINDS, ManifestError, MaskGenerationError, MaskSpec,
                   generate_dataset, load_dataset, quantize, read_image, read_mask, write_png)
from .model import RestorationModel, composite
from .train import (NonFiniteLossError, TrainConfig, dump_records, evaluate, new_state,
                    resume_state, train_checkpoint, train_loop)

log = logging.getLogger("mural_restore")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
CHECKPOINT_NAME = "model.ckpt"
LOSS_LOG_NAME = "loss.jsonl"
METRICS_NAME = "metrics.jsonl"
RESOLVED_CONFIG_NAME = "config.ini"


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ gen-data

def cmd_gen_data(args) -> int:
    spec = run_config.load(args.config).mask if args.config else MaskSpec()
    if args.mask_kind:
        spec = replace(spec, kind=args.mask_kind)
    records = generate_dataset(args.out, args.count, args.size, args.seed, spec)
    print(f"wrote {len(records)} samples to {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------- train

def _split(n: int, holdout: int):
    if holdout >= n:
        raise UsageError(f"holdout {holdout} leaves no training samples out of {n}")
    cut = n - holdout
    return slice(0, cut), slice(cut, n)


def _check_data_size(images: np.ndarray, size: int) -> None:
    if images.shape[1:3] != (size, size):
        raise UsageError(f"dataset images are {images.shape[1]}x{images.shape[2]} but "
                         f"model.input_size is {size}")


def _read_prior_log(path: Path, upto: int) -> list[str]:
    if not path.exists():
        return []
    keep = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip() and json.loads(line)["step"] <= upto:
            keep.append(line)
    return keep


def cmd_train(args) -> int:
    cfg = run_config.load(args.config) if args.config else run_config.RunConfig()
    if not args.config:
        log.info("resolved config <defaults> (digest %s):\n%s", cfg.digest(), cfg.to_ini())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / RESOLVED_CONFIG_NAME).write_text(cfg.to_ini(), encoding="utf-8")

    records, clean, mask, degraded = load_dataset(args.data)
    _check_data_size(clean, cfg.model.input_size)
    train_part, eval_part = _split(len(records), cfg.holdout)
    tcfg: TrainConfig = cfg.train

    if args.resume:
        ck = ckpt_io.load(args.resume)
        if ck.config.digest() != cfg.model.digest():
            raise ckpt_io.CheckpointError(
                f"config hash mismatch: checkpoint {ck.config.digest()} vs run config "
                f"{cfg.model.digest()}")
        state = resume_state(ck, tcfg)
        prior = _read_prior_log(out / LOSS_LOG_NAME, state.step)
        log.info("resuming from step %d", state.step)
    else:
        state = new_state(RestorationModel(cfg.model, tcfg.seed), tcfg)
        prior = []

    loss_path = out / LOSS_LOG_NAME
    with open(loss_path, "w", encoding="utf-8", newline="\n") as fh:
        for line in prior:
            fh.write(line + "\n")

        def emit(rec):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.flush()
            if rec["step"] == 1 or rec["step"] % args.log_every == 0 or rec["step"] == tcfg.steps:
                log.info("step %d lr %.3e mse %.5f ssim_loss %.5f total %.5f", rec["step"],
                         rec["lr"], rec["mse"], rec["ssim_loss"], rec["total"])

        train_loop(state, tcfg, clean[train_part], mask[train_part], log=emit,
                   checkpoint_path=out / CHECKPOINT_NAME)
    ckpt_io.save(out / CHECKPOINT_NAME, train_checkpoint(state))

    part = eval_part if cfg.holdout else train_part
    ids = [r.id for r in records[part]]
    rows, agg = evaluate(state.model, clean[part], mask[part], degraded[part], ids)
    agg["split"] = "holdout" if cfg.holdout else "train"
    dump_records(out / METRICS_NAME, rows + [agg])
    print(json.dumps(agg, sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------- infer

def cmd_infer(args) -> int:
    ck = ckpt_io.load(args.ckpt)
    model = ckpt_io.restore_model(ck)
    image = read_image(args.image)
    mask = read_mask(args.mask)
    if mask.shape[:2] != image.shape[:2]:
        raise UsageError(f"mask {mask.shape[:2]} and image {image.shape[:2]} sizes differ")
    if image.shape[0] != image.shape[1]:
        raise UsageError(f"image must be square, got {image.shape[0]}x{image.shape[1]}")
    replace(model.config, input_size=image.shape[0]).validate()
    degraded = image * (1.0 - mask)
    raw = model(degraded[None].astype(model.dtype), mask[None].astype(model.dtype))
    raw = raw.data.astype(np.float64)[0]
    result = raw if args.raw else composite(raw, image, mask)
    write_png(args.out, quantize(result))
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------- eval

def cmd_eval(args) -> int:
    model = ckpt_io.restore_model(ckpt_io.load(args.ckpt))
    records, clean, mask, degraded = load_dataset(args.data)
    _check_data_size(clean, model.config.input_size)
    rows, agg = evaluate(model, clean, mask, degraded, [r.id for r in records])
    dump_records(args.out, rows + [agg])
    print(json.dumps(agg, sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------- check

def run_suites(suite: str) -> list[checks.CheckResult]:
    results = []
    if suite in ("ops", "all"):
        results += checks.ops_suite(echo=print)
    if suite in ("grad", "all"):
        results += checks.grad_suite(echo=print)
    return results


def _report(results) -> int:
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed"
          + (f"; failed: {', '.join(failed)}" if failed else ""))
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_check(args) -> int:
    return _report(run_suites(args.suite))


def cmd_check_grad(args) -> int:
    return _report(run_suites("grad"))


def cmd_selftest(args) -> int:
    """Oracle suite plus a tiny gen-data -> train -> eval round trip."""
    results = checks.ops_suite(echo=print)
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        generate_dataset(root / "data", 4, 16, args.seed)
        cfg_text = ("[model]\nbase_channels = 4\ninput_size = 16\n"
                    "[schedule]\nsteps = 3\n[train]\nbatch_size = 2\n")
        (root / "run.ini").write_text(cfg_text, encoding="utf-8")
        ns = argparse.Namespace(config=root / "run.ini", data=root / "data", out=root / "run",
                                resume=None, log_every=1)
        code = cmd_train(ns)
        losses = [json.loads(x)["total"] for x in
                  (root / "run" / LOSS_LOG_NAME).read_text().splitlines()]
        ok = code == EXIT_OK and len(losses) == 3 and all(np.isfinite(losses))
        res = checks.CheckResult("pipeline:gen-train-eval", ok, float(len(losses)),
                                 "3 finite loss records")
        print(res.line())
        results.append(res)
    return _report(results)


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mural-restore", description="Mask-aware mural restoration at desk scale.")
    p.add_argument("-q", "--quiet", action="store_true", help="only warnings on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a synthetic dataset and manifest")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=8)
    g.add_argument("--size", type=int, default=32)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mask-kind", choices=MASK_KINDS, help="overrides [mask] kind")
    g.add_argument("--config", help="INI run file; only its [mask] section is used")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train from a run config")
    t.add_argument("--config", help="INI run file (defaults used when omitted)")
    t.add_argument("--data", required=True, help="dataset directory with manifest.jsonl")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--resume", help="training checkpoint to continue from")
    t.add_argument("--log-every", type=int, default=25)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="restore one image")
    i.add_argument("--ckpt", required=True)
    i.add_argument("--image", required=True, help="RGB PNG")
    i.add_argument("--mask", required=True, help="gray PNG, 255 = damaged")
    i.add_argument("--out", required=True)
    i.add_argument("--raw", action="store_true", help="write the uncomposited prediction")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="per-sample and mean PSNR / SSIM / MAE")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True, help="JSONL metrics table")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("check", help="oracle and gradient certification suites")
    c.add_argument("--suite", choices=("grad", "ops", "all"), default="all")
    c.set_defaults(func=cmd_check)

    cg = sub.add_parser("check-grad", help="alias for check --suite grad")
    cg.set_defaults(func=cmd_check_grad)

    s = sub.add_parser("selftest", help="ops suite plus a tiny end-to-end run")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (NonFiniteLossError, MaskGenerationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (UsageError, run_config.ConfigError, ckpt_io.CheckpointError, ManifestError,
            ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
