"""Command-line entry points: prepare, train, evaluate, boundary, experiment.

Exit status is 0 on success, 1 on invalid input (bad arguments, config,
manifest or data files) and 2 on runtime failures such as divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint, config as configmod, dataset, evaluation, pipeline, trainer

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _guard(path: Path, overwrite: bool):
    if path.exists() and not overwrite:
        raise UsageError(f"{path} already exists; pass --overwrite to replace it")


def _config(args) -> trainer.TrainConfig:
    cfg = configmod.load_config(args.config) if args.config else None
    overrides = {k: v for k, v in (("k", getattr(args, "k", None)), ("seed", getattr(args, "seed", None)),
                                   ("mnist_dir", getattr(args, "mnist_dir", None)))
                 if v is not None}
    if cfg is None:
        missing = [k for k in configmod.REQUIRED if k not in overrides and k != "domain"]
        if missing:
            raise UsageError(f"without --config, pass --{' --'.join(missing)}")
        cfg = trainer.TrainConfig(domain=getattr(args, "domain", None) or "mnist", **overrides)
    elif overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def _run_manifest(cfg, artifacts, started, extra=None):
    checksums = {}
    if cfg.domain == "mnist":
        checksums = {role: pipeline.sha256(p) for role, p in pipeline.mnist_paths(cfg.mnist_dir).items()}
    return {"config": cfg.to_dict(), "seeds": {"master": cfg.seed,
                                               "streams": {"split": trainer.STREAM_SPLIT,
                                                           "generator_init": trainer.STREAM_GEN_INIT,
                                                           "discriminator_init": trainer.STREAM_DISC_INIT,
                                                           "train": trainer.STREAM_TRAIN}},
            "dataset_sha256": checksums, "artifacts": {k: str(v) for k, v in artifacts.items()},
            "started": started, "finished": time.strftime("%Y-%m-%dT%H:%M:%S"), **(extra or {})}


# --------------------------------------------------------------------------- verbs

def cmd_prepare(args):
    if args.k is not None and not 1 <= args.k <= 9:
        raise UsageError(f"k must be in 1..9, got {args.k}")
    cfg = _config(args)
    for name in ("labelled_per_class", "unlabelled_per_class", "val_fraction"):
        if getattr(args, name) is not None:
            cfg = replace(cfg, **{name: getattr(args, name)})
    out = Path(args.out)
    _guard(out, args.overwrite)
    split, extra = pipeline.build_split(cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    dataset.write_split_manifest(out, split, extra)
    print(f"known classes: {' '.join(map(str, split.known_classes))}")
    print(f"labelled: {len(split.labelled_idx)}  validation: {len(split.validation_idx)}  "
          f"unlabelled: {len(split.unlabelled_idx)}  test: {len(split.test_idx)}")
    print(f"wrote {out}")


def cmd_train(args):
    cfg = _config(args)
    out = Path(args.out)
    _guard(out, args.overwrite)
    started = time.strftime("%Y-%m-%dT%H:%M:%S")
    split = pipeline.split_from_manifest(args.split, cfg) if args.split else pipeline.build_split(cfg)[0]
    out.mkdir(parents=True, exist_ok=True)
    paths = {"checkpoint": out / "checkpoint.bin", "train_log": out / "train_log.jsonl",
             "config": out / "config.ini", "run_manifest": out / "run_manifest.json"}
    paths["config"].write_text(configmod.dump_config(cfg))
    try:
        gen, disc, tlog = trainer.train(split, cfg)
    except trainer.DivergenceError as exc:
        paths["train_log"].write_text(json.dumps({"diverged_at": exc.step, "error": str(exc)}) + "\n")
        raise
    tlog.write(paths["train_log"])
    checkpoint.save_checkpoint(paths["checkpoint"], cfg, gen, disc,
                               meta={"best_step": tlog.best_step, "fair_validation_accuracy": tlog.best_accuracy,
                                     "known_classes": list(split.known_classes)})
    paths["run_manifest"].write_text(json.dumps(_run_manifest(cfg, paths, started), indent=2, sort_keys=True) + "\n")
    print(f"best step {tlog.best_step}  fair-validation accuracy {tlog.best_accuracy:.4f}  ({tlog.stop_reason})")
    print(f"wrote {out}")


def cmd_evaluate(args):
    out = Path(args.out)
    _guard(out, args.overwrite)
    cfg, _, disc, meta = checkpoint.load_checkpoint(args.checkpoint)
    if args.mnist_dir:
        cfg = replace(cfg, mnist_dir=args.mnist_dir)
    cfg = replace(cfg, foreign=tuple(args.foreign or ()))
    m = dataset.read_split_manifest(args.split)
    if int(m["k"]) != cfg.k:
        raise UsageError(f"checkpoint has k={cfg.k} but split manifest has k={m['k']}")
    split = pipeline.split_from_manifest(args.split, cfg)
    fair = trainer.fair_validation_accuracy(disc, split.x_validation, split.y_validation)
    report = pipeline.evaluate_split(disc, split, cfg, fair)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.write(out)
    print(report.summary())
    print(f"fair-validation accuracy: {fair:.4f}")
    print(f"wrote {out}")


def cmd_boundary(args):
    stem = Path(args.out)
    for suffix in (".txt", ".ppm"):
        _guard(stem.with_suffix(suffix), args.overwrite)
    cfg, _, disc, _ = checkpoint.load_checkpoint(args.checkpoint)
    if disc.input_shape != (2,):
        raise UsageError(f"boundary rasters need a 2-D input model; checkpoint expects input {disc.input_shape}")
    grid = evaluation.boundary_raster(disc, tuple(args.bounds), args.resolution)
    stem.parent.mkdir(parents=True, exist_ok=True)
    txt, ppm = evaluation.write_raster(stem, grid, cfg.k + 1)
    counts = np.bincount(grid.ravel(), minlength=cfg.k + 2)[1:]
    print("cells per class: " + " ".join(f"{c}:{n}" for c, n in enumerate(counts, 1)))
    print(f"wrote {txt} and {ppm}")


def cmd_experiment(args):
    cfg = _config(args)
    out = Path(args.out)
    _guard(out, args.overwrite)
    k = args.k if args.k is not None else cfg.k
    started = time.strftime("%Y-%m-%dT%H:%M:%S")
    report = pipeline.run_experiment(k, args.runs, cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = json.loads(report.to_json())
    doc["manifest"] = _run_manifest(cfg, {"report": out}, started)
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    std = "n/a" if report.f1_macro_std is None else f"{report.f1_macro_std:.4f}"
    mean = "n/a" if report.f1_macro_mean is None else f"{report.f1_macro_mean:.4f}"
    print(f"k={k} runs={args.runs} failures={report.failures} F1-macro {mean} +- {std}")
    for name, v in report.open_set_mean.items():
        s = report.open_set_std[name]
        print(f"open-set [{name}] {v:.4f} +- {'n/a' if s is None else f'{s:.4f}'}")
    print(f"wrote {out}")
    if report.failures == args.runs:
        return EXIT_RUNTIME
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def build_parser():
    p = _Parser(prog="opensslac", description="Open-set semi-supervised GAN classification with a K+1'th class.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp, cfg=True):
        if cfg:
            sp.add_argument("--config", help="INI run configuration")
            sp.add_argument("--k", type=int)
            sp.add_argument("--seed", type=int)
            sp.add_argument("--mnist-dir", dest="mnist_dir")
        sp.add_argument("--out", required=True)
        sp.add_argument("--overwrite", action="store_true")

    sp = sub.add_parser("prepare", help="build an SsLAC split and write its manifest")
    common(sp)
    sp.add_argument("--domain", choices=("mnist", "dummy"))
    sp.add_argument("--labelled-per-class", dest="labelled_per_class", type=int)
    sp.add_argument("--unlabelled-per-class", dest="unlabelled_per_class", type=int)
    sp.add_argument("--val-fraction", dest="val_fraction", type=float)
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("train", help="train a generator/discriminator pair")
    common(sp)
    sp.add_argument("--split", help="split manifest from 'prepare' (default: build from the config)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="score a checkpoint on the test set and foreign datasets")
    common(sp, cfg=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--split", required=True)
    sp.add_argument("--mnist-dir", dest="mnist_dir")
    sp.add_argument("--foreign", action="append", metavar="NAME=IDX_IMAGES")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("boundary", help="decision-boundary raster of a 2-D model")
    common(sp, cfg=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--bounds", type=float, nargs=4, metavar=("XMIN", "XMAX", "YMIN", "YMAX"),
                    default=(-14.0, 14.0, -14.0, 14.0))
    sp.add_argument("--resolution", type=int, default=256)
    sp.set_defaults(func=cmd_boundary)

    sp = sub.add_parser("experiment", help="repeated runs with mean and standard deviation")
    common(sp)
    sp.add_argument("--runs", type=int, default=20)
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"opensslac: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args) or EXIT_OK
    except (UsageError, configmod.ConfigError, dataset.IdxFormatError, checkpoint.CheckpointError,
            FileNotFoundError, KeyError, ValueError) as exc:
        print(f"opensslac: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (trainer.DivergenceError, FloatingPointError, MemoryError) as exc:
        print(f"opensslac: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
