"""Command-line interface: train, eval, gradcheck, macs, encode-inspect.

Exit codes: 0 success, 1 validation failure (a check or run failed), 2 bad
input (unknown flags, malformed config or data files).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import codec
from .blocks import ModelSpec, build_model
from .checkpoint import load_checkpoint
from .codec import SurrogateSpec
from .config import load_config
from .data import split_80_20
from .errors import ConfigError, DataFormatError, Has8Error, OptimError
from .macs import count_macs
from .train import TrainingAborted, evaluate, load_dataset, train_run, tune_malloc
from .verify import run_all


def _parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def cmd_train(args) -> int:
    overrides = _parse_overrides(args.set)
    if args.out_dir:
        overrides["run.out_dir"] = args.out_dir
    cfg = load_config(args.config, overrides)
    try:
        summary = train_run(cfg)
    except (TrainingAborted, OptimError) as e:
        print(f"training aborted: {e}", file=sys.stderr)
        return 1
    print(f"best_val_acc={summary['best_val_acc']} best_epoch={summary['best_epoch']}")
    return 0


def cmd_eval(args) -> int:
    tune_malloc()
    spec, tensors, _ = load_checkpoint(args.checkpoint)
    dtype = np.float32 if args.precision == "f32" else np.float64
    model = build_model(spec, np.random.default_rng(0), dtype=dtype)
    model.load_tensors(tensors)

    class _D:
        data_name = args.data_name
        data_path = args.data_path
        limit_train = args.limit
        limit_test = args.limit
        resize_to = None

    if args.split == "test":
        ds = load_dataset(_D, "test")
    else:
        full = load_dataset(_D, "train")
        train_ds, val_ds = split_80_20(full, args.seed)
        ds = train_ds if args.split == "train" else val_ds
    acc = evaluate(model, ds, batch_size=args.batch_size, dtype=dtype)
    print(f"split={args.split} n={len(ds)} top1={acc:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    reports, tables = run_all(grid_points=args.grid)
    for r in reports:
        print(r.line())
    print()
    for kind, table in tables.items():
        var_str = " ".join(f"{v:.3e}" for v in table["variance_unscaled"])
        env_str = " ".join(f"{v:.3e}" for v in table["rescale_envelope"])
        print(f"variance[{kind}] per k=0..7: {var_str}")
        print(f"envelope[{kind}] per k=0..7: {env_str}")
    failures = [r for r in reports if not r.passed]
    if args.report:
        with open(args.report, "w") as f:
            for r in reports:
                f.write(json.dumps(r.__dict__, sort_keys=True) + "\n")
            f.write(json.dumps({"variance_tables": tables}, sort_keys=True) + "\n")
    print(f"\n{len(reports) - len(failures)}/{len(reports)} checks passed")
    return 1 if failures else 0


def cmd_macs(args) -> int:
    surrogate = SurrogateSpec()
    spec = ModelSpec(
        variant=args.variant,
        b=args.b,
        m=args.m,
        d_max=args.d_max,
        num_classes=args.num_classes,
        in_channels=args.in_channels,
        surrogate=surrogate,
        input_size=args.input_size,
    )
    model = build_model(spec, np.random.default_rng(0), dtype=np.float32)
    rep = count_macs(model, (args.input_size, args.input_size), batch=args.batch)
    print(f"model {spec.name()} @ {args.input_size}x{args.input_size} batch={args.batch}")
    print(f"params {model.param_count()}")
    print(f"ann_macs {rep.ann}")
    print(f"snn_macs {rep.snn}  # one timestep")
    print(f"total_macs {rep.total}")
    return 0


def cmd_encode_inspect(args) -> int:
    if args.intensity is not None:
        if not 0 <= args.intensity <= 255:
            raise ConfigError(f"intensity must be in [0, 255], got {args.intensity}")
        intensity = args.intensity
    else:
        from PIL import Image

        img = Image.open(args.image).convert("L")
        x, y = (int(v) for v in args.pixel.split(","))
        intensity = img.getpixel((x, y))
        print(f"pixel ({x},{y}) of {args.image}: intensity {intensity}")

    print(f"intensity {intensity} -> bit pattern (MSB first, t=0..7): {codec.bit_pattern(intensity)}")
    print()
    header = f"{'k':>2} {'bit':>3}"
    kinds = list(codec.SURROGATE_KINDS)
    for kind in kinds:
        header += f" {kind + '/plain':>18} {kind + '/rescaled':>18}"
    print(header)
    for k in range(7, -1, -1):
        bit = (intensity >> k) & 1
        row = f"{k:>2} {bit:>3}"
        for kind in kinds:
            spec = SurrogateSpec(kind=kind, rescale=False)
            g = float(codec.surrogate_gradient(float(intensity), k, spec))
            row += f" {g:>18.6e} {g * codec.rescale_factor(k):>18.6e}"
        print(row)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="has8", description="Hybrid ANN-SNN training framework")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a config file")
    t.add_argument("--config", help="key = value config file")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    t.add_argument("--out-dir", help="output directory override")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data-name", default="mnist", choices=["mnist", "cifar10"])
    e.add_argument("--data-path", required=True)
    e.add_argument("--split", default="test", choices=["train", "val", "test"])
    e.add_argument("--seed", type=int, default=42, help="seed of the 80/20 split for train/val")
    e.add_argument("--limit", type=int, default=None)
    e.add_argument("--batch-size", type=int, default=256)
    e.add_argument("--precision", default="f32", choices=["f32", "f64"])
    e.set_defaults(fn=cmd_eval)

    g = sub.add_parser("gradcheck", help="run the verification suite (f64)")
    g.add_argument("--grid", type=int, default=1024, help="intensity grid points for the closed-form check")
    g.add_argument("--report", help="write a machine-readable JSONL report here")
    g.set_defaults(fn=cmd_gradcheck)

    m = sub.add_parser("macs", help="analytic MAC accounting for a model spec")
    m.add_argument("--variant", default="resnet", choices=["vgg", "resnet"])
    m.add_argument("--b", type=int, default=32)
    m.add_argument("--m", type=int, default=2)
    m.add_argument("--d-max", type=int, default=4)
    m.add_argument("--num-classes", type=int, default=10)
    m.add_argument("--in-channels", type=int, default=3)
    m.add_argument("--input-size", type=int, default=224)
    m.add_argument("--batch", type=int, default=1)
    m.set_defaults(fn=cmd_macs)

    i = sub.add_parser("encode-inspect", help="show the spike pattern and surrogate gradients")
    src = i.add_mutually_exclusive_group(required=True)
    src.add_argument("--intensity", type=int, help="pixel intensity in [0, 255]")
    src.add_argument("--image", help="image file readable by Pillow")
    i.add_argument("--pixel", default="0,0", metavar="X,Y", help="pixel to inspect in --image mode")
    i.set_defaults(fn=cmd_encode_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except (ConfigError, DataFormatError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Has8Error as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
