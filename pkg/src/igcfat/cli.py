"""Command-line entry point: ``igcfat <command> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config, write_config_echo
from .data import DATA_ROOT_ENV, IMAGE_SUFFIXES, DatasetManifest, data_root, prepare_dataset, write_micro_dataset
from .degradation import LEVELS, degrade, derive_seed
from .evalkit import as_upscaler, compare_grid, evaluate
from .imageops import read_png, rgb_to_y, write_png
from .trainer import CheckpointError, TrainingError, finetune, init_state, train
from .validation import ConfigError
from .wavelet import WAVELETS, swt2

log = logging.getLogger("igcfat")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _images_in(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    raise FileNotFoundError(f"no such file or directory: {path}")


def _resolve_data(arg) -> Path:
    if arg:
        return Path(arg)
    root = data_root()
    if root is None:
        raise ConfigError(f"no --data given and ${DATA_ROOT_ENV} is not set")
    return root / "manifest.json"


def _load_source(path: Path):
    """Training images from a manifest JSON or a directory of images."""
    if path.suffix == ".json":
        if not path.is_file():
            raise FileNotFoundError(f"manifest not found: {path}")
        return DatasetManifest.load(path).load_images("train")
    images = [read_png(p) for p in _images_in(path)]
    if not images:
        raise ValueError(f"no images in {path}")
    return images


def _load_val(path: Path):
    if path.suffix == ".json":
        if not path.is_file():
            raise FileNotFoundError(f"manifest not found: {path}")
        return DatasetManifest.load(path)
    return [(p.stem, read_png(p)) for p in _images_in(path)]


def _run_config(args, stage=None):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if stage:
        section = {}
        for key in ("iterations", "batch", "lr", "patch_size", "checkpoint_every"):
            value = getattr(args, key, None)
            if value is not None:
                section[key] = value
        if args.seed is not None:
            section["seed"] = args.seed
        if section:
            overrides[stage] = section
    return load_config(args.config, overrides)


# ---------------------------------------------------------------------------
# commands


def cmd_prepare_data(args):
    out = Path(args.out)
    train_dir, val_dir = args.train, args.val
    if args.micro:
        train_dir = write_micro_dataset(out / "source" / "train", count=args.micro)[0].parent
        val_dir = write_micro_dataset(out / "source" / "val", size=(64, 96), count=max(2, args.micro // 4))[0].parent
    if train_dir is None:
        root = data_root()
        if root is None:
            raise ConfigError(f"no --train given and ${DATA_ROOT_ENV} is not set")
        train_dir = root / "train"
        val_dir = val_dir or (root / "val" if (root / "val").is_dir() else None)
    for d in (train_dir, val_dir):
        if d is not None and not Path(d).is_dir():
            raise FileNotFoundError(f"source directory not found: {d}")
    manifest = prepare_dataset(train_dir, out, val_dir, long_side=args.long_side, short_side=args.short_side,
                               threshold=args.threshold)
    excluded = len(manifest.prep_params.get("excluded", []))
    print(f"prepared {len(manifest.split('train'))} train / {len(manifest.split('val'))} val images "
          f"({excluded} excluded) -> {out / 'manifest.json'}")


def cmd_degrade(args):
    cfg = _run_config(args)
    out = Path(args.out)
    write_config_echo(cfg, out)
    paths = [p for src in args.inputs for p in _images_in(Path(src))]
    if not paths:
        raise ValueError("no input images")
    records = []
    for i, path in enumerate(paths):
        hr = read_png(path)
        seed = derive_seed(cfg.seed, i)
        if args.level:
            lr, draw = degrade(hr, cfg.degradation[args.level], seed)
        else:
            lr, draw = cfg.degradation.degrade(hr, seed)
        write_png(out / f"{path.stem}.png", lr)
        records.append({"input": str(path), "output": str(out / f"{path.stem}.png"), "draw": draw.to_dict()})
        log.info("%s -> %s (%s)", path.name, draw.level, lr.shape)
    (out / "draws.json").write_text(json.dumps(records, indent=2))
    print(f"degraded {len(paths)} images -> {out}")


def _train_stage(args, stage):
    cfg = _run_config(args, stage)
    out = Path(args.out)
    write_config_echo(cfg, out)
    source = _load_source(_resolve_data(args.data))
    stage_cfg = getattr(cfg, stage)
    if stage == "pretrain":
        state = train(init_state(stage_cfg, cfg.generator), source, cfg.degradation, stage_cfg, out_dir=out)
    else:
        state = finetune(source, stage_cfg, args.checkpoint, cfg.degradation, cfg.discriminator, cfg.wavelet,
                         out_dir=out)
    print(f"{stage}: {state.iteration} iterations, rolling L1 {state.rolling_l1:.5f} -> {out / f'{stage}_final.pt'}")


def cmd_pretrain(args):
    _train_stage(args, "pretrain")


def cmd_finetune(args):
    _train_stage(args, "finetune")


def cmd_eval(args):
    pairs = _load_val(_resolve_data(args.data))
    report = evaluate(args.model, pairs, metrics=args.metrics, perceptual_backend=args.perceptual_backend,
                      psnr_channel=args.psnr_channel)
    report.config["model"] = str(args.model)
    report.save(args.out)
    agg = ", ".join(f"{k}={v:.4f}" for k, v in report.aggregate.items())
    print(f"{len(report.per_image)} images: {agg} -> {args.out}")


def _named(spec: str):
    name, sep, value = spec.partition("=")
    return (name, value) if sep else (Path(spec).stem, spec)


def cmd_compare(args):
    lr = read_png(args.lr)
    panels = []
    for spec in args.model:
        name, model = _named(spec)
        panels.append((name, as_upscaler(model)(lr)))
    if args.gt:
        panels.append(("GT", read_png(args.gt)))
    crop = tuple(int(v) for v in args.crop.split(",")) if args.crop else None
    if crop is not None and len(crop) != 4:
        raise ConfigError("--crop: expected top,left,height,width")
    grid = compare_grid(panels, args.out, crop=crop, labels=not args.no_labels)
    print(f"{len(panels)} panels, grid {grid.shape[1]}x{grid.shape[0]} -> {args.out}")


def cmd_swt_viz(args):
    img = read_png(args.input)
    bands = swt2(rgb_to_y(img), args.wavelet)
    out = Path(args.out)
    for name, band in bands.as_dict().items():
        b = band.numpy()
        span = b.max() - b.min()
        norm = (b - b.min()) / span if span > 0 else np.zeros_like(b)
        write_png(out / f"{Path(args.input).stem}_{name}.png", norm)
    print(f"wrote 4 subbands -> {out}")


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="igcfat", description="Real-world x4 super-resolution toolkit.")
    parser.add_argument("--version", action="version", version=f"igcfat {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="repeat for more detail")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def common(p, out_help, config=True):
        if config:
            p.add_argument("--config", help="YAML run config (defaults to the shipped desk-scale config)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", required=True, help=out_help)

    def train_flags(p):
        p.add_argument("--data", help=f"manifest JSON or image directory (default: ${DATA_ROOT_ENV}/manifest.json)")
        p.add_argument("--iterations", type=int)
        p.add_argument("--batch", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--patch-size", dest="patch_size", type=int)
        p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)

    p = sub.add_parser("prepare-data", help="build prepared GT/LR trees and a manifest")
    common(p, "output directory", config=False)
    p.add_argument("--train", help=f"training source directory (default: ${DATA_ROOT_ENV}/train)")
    p.add_argument("--val", help="validation source directory")
    p.add_argument("--micro", type=int, metavar="N", help="use N bundled sample crops instead of a source directory")
    p.add_argument("--long-side", type=int, default=2000)
    p.add_argument("--short-side", type=int, default=1000)
    p.add_argument("--threshold", type=int, default=1000, help="minimum short side kept")
    p.set_defaults(func=cmd_prepare_data)

    p = sub.add_parser("degrade", help="synthesize LR images from HR PNGs")
    p.add_argument("inputs", nargs="+", help="HR images or directories")
    common(p, "output directory for LR PNGs and draws.json")
    p.add_argument("--level", choices=LEVELS, help="force a level instead of sampling one")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("pretrain", help="L1 pretraining of the generator")
    common(p, "checkpoint directory")
    train_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="adversarial fine-tuning from a checkpoint")
    common(p, "checkpoint directory")
    train_flags(p)
    p.add_argument("--checkpoint", required=True, help="pretrain (warm start) or finetune (resume) checkpoint")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="score a model on the validation set")
    p.add_argument("--model", required=True, help="checkpoint path or baseline (bicubic, nearest, ...)")
    p.add_argument("--data", help="manifest JSON or GT image directory")
    p.add_argument("--metrics", nargs="+", default=["psnr", "perceptual"])
    p.add_argument("--perceptual-backend", default="toy")
    p.add_argument("--psnr-channel", choices=("rgb", "y"), default="rgb")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="side-by-side crops of several models on one LR image")
    p.add_argument("--lr", required=True, help="LR input PNG")
    p.add_argument("--gt", help="GT PNG appended as the last panel")
    p.add_argument("--model", action="append", required=True, metavar="[NAME=]SPEC",
                   help="checkpoint path or baseline name; repeat per panel")
    p.add_argument("--crop", help="top,left,height,width in SR coordinates")
    p.add_argument("--no-labels", action="store_true")
    p.add_argument("--out", required=True, help="output PNG")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("swt-viz", help="write the four SWT subbands of an image's luma")
    p.add_argument("input")
    p.add_argument("--wavelet", choices=WAVELETS, default="haar")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_swt_viz)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, FileNotFoundError, CheckpointError, TrainingError, ValueError, OSError) as exc:
        print(f"igcfat {args.command}: error: {exc}", file=sys.stderr)
        if args.verbose >= 2:
            raise
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
