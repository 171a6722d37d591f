"""Command-line interface: ``keepaugment <command> [options]``.

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
With ``--json`` errors are written to stderr as one JSON line.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .augment import augment_batch, batch_saliency_maps
from .config import AugmentConfig
from .evaluation import FIDELITY_MODES, bench_saliency, fidelity_sweep
from .io import (
    DatasetRecord,
    load_model,
    make_synthetic,
    read_config,
    read_dataset,
    read_image,
    save_model,
    stack_records,
    write_dataset,
    write_ppm,
    write_raw,
)
from .nn import predict_labels, train_toy
from .saliency import SaliencyStrategy, compute_saliency, lowres_shape
from .tensor import resize_bicubic

log = logging.getLogger("keepaugment")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None
    if not values:
        raise UsageError("empty list")
    return values


def _default_parallelism():
    value = os.environ.get("KEEPAUG_THREADS")
    if not value:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        raise UsageError(f"KEEPAUG_THREADS must be an integer, got {value!r}") from None


def _load_data(path):
    records = read_dataset(path)
    if not records:
        raise ValueError(f"{path}: dataset is empty")
    return records


def _heat(saliency, channels):
    lo, hi = float(saliency.min()), float(saliency.max())
    norm = (saliency - lo) / (hi - lo) if hi > lo else np.zeros_like(saliency)
    return np.repeat(norm[:, :, None], channels, axis=2)


def _saliency_nets(cfg, model_path):
    """``(net, net_lr)`` for ``cfg.saliency`` from a model directory."""
    if model_path is None:
        return None, None
    model = load_model(model_path)
    if cfg.saliency.variant == "low-resolution":
        return None, model
    return model, None


def _saliency_source(cfg, args):
    if not cfg.uses_saliency:
        return None
    if args.model:
        return {"model": str(args.model), "strategy": cfg.saliency.variant}
    return {"saliency_dir": cfg.saliency.path}


# -- commands ---------------------------------------------------------------------


def cmd_make_synthetic(args):
    records = make_synthetic(args.n, args.size, rng=args.seed, channels=args.channels)
    write_dataset(args.out, records)
    print(f"wrote {len(records)} records to {args.out}")


def cmd_train_toy(args):
    images, labels = stack_records(_load_data(args.data))
    if args.half_res:
        lh, lw = lowres_shape(images.shape[1], images.shape[2])
        images = np.stack([resize_bicubic(img, lh, lw) for img in images])
    net, accuracy = train_toy(
        images,
        labels,
        epochs=args.epochs,
        lr=args.lr,
        early_head=args.early_head,
        aux_coef=args.aux_coef,
        rng=args.seed,
        batch_size=args.batch_size,
        channels=args.channels,
    )
    save_model(
        args.out,
        net,
        extra={
            "training": {
                "epochs": args.epochs,
                "lr": args.lr,
                "aux_coef": args.aux_coef,
                "seed": args.seed,
                "batch_size": args.batch_size,
                "half_res": args.half_res,
                "train_accuracy": accuracy,
            }
        },
    )
    print(f"train accuracy: {accuracy:.4f}")


def cmd_augment(args):
    cfg = read_config(args.config) if args.config else AugmentConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    sources = [s for s in (args.model, args.saliency_dir) if s is not None]
    from_config = cfg.saliency.variant == "external" and cfg.saliency.path is not None
    if len(sources) > 1 or (args.model and from_config):
        raise UsageError("give exactly one saliency source (--model, --saliency-dir or an external path in --config)")
    if cfg.uses_saliency and not sources and not from_config:
        raise UsageError(f"mode {cfg.mode} needs --model or --saliency-dir")
    if args.saliency_dir is not None:
        cfg = cfg.replace(saliency=SaliencyStrategy("external", path=str(args.saliency_dir)))
    parallelism = args.parallelism or _default_parallelism()

    records = _load_data(args.data)
    images, labels = stack_records(records)
    net, net_lr = _saliency_nets(cfg, args.model)
    results = augment_batch(images, labels, cfg, net=net, net_lr=net_lr, parallelism=parallelism)

    out_records, sidecar = [], []
    for i, res in enumerate(results):
        out_records.append(DatasetRecord(res.image, int(labels[i])))
        entry = {"source_index": i}
        entry.update(res.info)
        if cfg.mode == "keep-cutmix":
            entry["mixed"] = res.label.to_list()
        sidecar.append(entry)
    write_dataset(args.out, out_records, extra=sidecar)
    echo = cfg.to_dict()
    echo.pop("parallelism")  # does not affect outputs
    manifest = {
        "tool": "keepaugment",
        "version": __version__,
        "config": echo,
        "seed": cfg.seed,
        "input": str(args.data),
        "output": str(args.out),
        "saliency_source": _saliency_source(cfg, args),
        "records": "records.json",
    }
    Path(args.out, "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    print(f"augmented {len(results)} images ({cfg.mode}) into {args.out}")


def cmd_saliency(args):
    strategy = SaliencyStrategy(args.strategy)
    if strategy.variant == "external":
        raise UsageError("strategy must be one of full, low-res, early-head, max-logit")
    net = load_model(args.model)
    if strategy.variant == "early-head" and not net.has_early_head:
        raise ValueError(f"{args.model}: the early-head strategy needs a model with an early head (train with --early-head)")
    image = read_image(args.image)
    h, w = image.shape[:2]
    if strategy.variant == "low-resolution":
        lh, lw = lowres_shape(h, w, strategy.factor)
        if net.input_shape[:2] != (lh, lw):
            raise ValueError(f"low-res strategy needs a model for {lh}x{lw} inputs, got {net.input_shape[:2]}")
        log.info("internal resolution %dx%d", lh, lw)
        label = args.label
        if label is None:
            label = int(predict_labels(net.forward(resize_bicubic(image, lh, lw)))[0])
    else:
        log.info("internal resolution %dx%d", h, w)
        label = args.label
        if label is None and strategy.variant != "max-logit":
            label = int(predict_labels(net.forward(image))[0])
    sal = compute_saliency(strategy, image, label, net=net, net_lr=net)
    write_raw(args.out, sal)
    if args.viz:
        write_ppm(args.viz, _heat(sal, 3))
    print(f"wrote {sal.shape[0]}x{sal.shape[1]} saliency map to {args.out}")


def cmd_preview(args):
    cfg = read_config(args.config) if args.config else AugmentConfig()
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    records = _load_data(args.data)
    n = args.n
    if n > len(records):
        log.warning("--n %d exceeds dataset size %d; showing %d", n, len(records), len(records))
        n = len(records)
    images, labels = stack_records(records[:n])
    net, net_lr = _saliency_nets(cfg, args.model)
    if cfg.uses_saliency and net is None and net_lr is None:
        raise UsageError(f"mode {cfg.mode} needs --model")
    maps = None
    if net is not None or net_lr is not None:
        maps = batch_saliency_maps(images, labels, cfg, net=net, net_lr=net_lr)
    results = augment_batch(images, labels, cfg, saliency_maps=maps, parallelism=1)
    rows = []
    for i, res in enumerate(results):
        heat = _heat(maps[i], images.shape[3]) if maps is not None else np.zeros_like(images[i])
        rows.append(np.concatenate([images[i], heat, res.image], axis=1))
    write_ppm(args.out, np.concatenate(rows, axis=0))
    print(f"wrote {n}x3 preview grid to {args.out}")


def cmd_fidelity(args):
    magnitudes = _int_list(args.magnitudes)
    if any(m < 0 for m in magnitudes) or any(b < a for a, b in zip(magnitudes, magnitudes[1:])):
        raise UsageError(f"--magnitudes must be non-negative and ascending, got {magnitudes}")
    oracle = load_model(args.oracle)
    saliency_net = load_model(args.model) if args.model else None
    images, labels = stack_records(_load_data(args.data))
    report = fidelity_sweep(
        oracle, images, labels, args.mode, magnitudes, args.trials, args.seed, saliency_net=saliency_net, tau=args.tau
    )
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=1) + "\n")
    print(json.dumps(report.to_dict()) if args.json else report.to_table())


def cmd_bench(args):
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    for s in strategies:
        try:
            if SaliencyStrategy(s).variant == "external":
                raise UsageError("external maps cannot be benchmarked")
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    net = load_model(args.model)
    net_lr = load_model(args.model_lr) if args.model_lr else None
    images, labels = stack_records(_load_data(args.data))
    if args.limit:
        images, labels = images[: args.limit], labels[: args.limit]
    report = bench_saliency(strategies, images, labels % net.n_classes, net, net_lr=net_lr, repetitions=args.reps)
    print(json.dumps(report.to_dict()) if args.json else report.to_table())


# -- parser -----------------------------------------------------------------------


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output and errors")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="keepaugment", description="Saliency-preserving data augmentation.")
    parser.add_argument("--version", action="version", version=f"keepaugment {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("make-synthetic", parents=[common], help="generate the two-class toy dataset")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("train-toy", parents=[common], help="train the toy saliency network")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--early-head", action="store_true")
    p.add_argument("--aux-coef", type=float, default=0.3)
    p.add_argument("--channels", type=_int_list, default=[8, 16])
    p.add_argument("--half-res", action="store_true", help="train on bicubic half-resolution copies")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("augment", parents=[common], help="augment a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--model")
    p.add_argument("--saliency-dir")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--parallelism", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("saliency", parents=[common], help="compute one saliency map")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--strategy", default="full", choices=["full", "low-res", "early-head", "max-logit"])
    p.add_argument("--label", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--viz", help="also write a min-max normalized PPM heat map")
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("preview", parents=[common], help="original | saliency | augmented grid")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--model")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preview)

    p = sub.add_parser("fidelity", parents=[common], help="oracle label fidelity sweep")
    p.add_argument("--oracle", required=True)
    p.add_argument("--model", help="saliency network for keep-* modes (default: the oracle)")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", default="plain-cutout", choices=FIDELITY_MODES)
    p.add_argument("--magnitudes", default="4,8,12")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--tau", type=float, default=0.6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write the report as JSON")
    p.set_defaults(func=cmd_fidelity)

    p = sub.add_parser("bench", parents=[common], help="time saliency strategies")
    p.add_argument("--model", required=True)
    p.add_argument("--model-lr", help="half-resolution network (default: random weights)")
    p.add_argument("--data", required=True)
    p.add_argument("--strategies", default="full,low-res,early-head")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def _report(exc, code, as_json):
    if as_json:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    else:
        prefix = "usage error" if code == 2 else "error"
        print(f"keepaugment: {prefix}: {exc}", file=sys.stderr)
    return code


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    as_json = "--json" in argv
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _report(exc, 2, as_json)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s", stream=sys.stderr
    )
    try:
        args.func(args)
    except UsageError as exc:
        return _report(exc, 2, as_json)
    except (OSError, ValueError, KeyError) as exc:
        return _report(exc, 1, as_json)
    return 0


if __name__ == "__main__":
    sys.exit(main())
