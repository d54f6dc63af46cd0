"""Glue between configs, data on disk, training and evaluation.

Also home of :func:`run_experiment`, the repeated-run protocol.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dataset, evaluation, trainer

log = logging.getLogger(__name__)

_MNIST_NAMES = {
    "train_images": ("train-images.idx3-ubyte", "train-images-idx3-ubyte"),
    "train_labels": ("train-labels.idx1-ubyte", "train-labels-idx1-ubyte"),
    "test_images": ("t10k-images.idx3-ubyte", "t10k-images-idx3-ubyte"),
    "test_labels": ("t10k-labels.idx1-ubyte", "t10k-labels-idx1-ubyte"),
}


def mnist_paths(mnist_dir) -> dict:
    root = Path(mnist_dir)
    out = {}
    for role, names in _MNIST_NAMES.items():
        hit = next((root / n for n in names if (root / n).is_file()), None)
        if hit is None:
            raise FileNotFoundError(f"{role}: none of {', '.join(names)} found in {root}")
        out[role] = hit
    return out


def load_mnist(mnist_dir):
    p = mnist_paths(mnist_dir)
    return (dataset.load_image_set(p["train_images"], p["train_labels"]),
            dataset.load_image_set(p["test_images"], p["test_labels"]))


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def parse_foreign(entries) -> dict:
    """``["fashion=/path/imgs.idx3-ubyte", ...]`` -> ``{"fashion": Path}``."""
    out = {}
    for e in entries:
        name, sep, path = e.partition("=")
        if not sep or not name or not path:
            raise ValueError(f"foreign dataset must be given as name=path, got {e!r}")
        out[name.strip()] = Path(path.strip())
    return out


def load_foreign(entries) -> dict:
    """Name -> normalized (n, 28, 28, 1) images, using the training normalization."""
    return {name: dataset.normalize(dataset.load_image_set(path).images)
            for name, path in parse_foreign(entries).items()}


# --------------------------------------------------------------------------- splits

def build_split(config: trainer.TrainConfig, data=None):
    """``(split, extra)`` for the configured domain; ``extra`` goes into the split manifest.

    ``data`` may carry preloaded ``(train_set, test_set)`` for MNIST.
    """
    if config.domain == "dummy":
        if config.k != 3:
            raise ValueError("the dummy domain has exactly 3 known classes (k = 3)")
        dom = dataset.make_dummy_domain(config.seed, config.dummy_samples_per_blob)
        return dom.split, {"domain": "dummy", "samples_per_blob": config.dummy_samples_per_blob}
    dataset.choose_known_classes(config.k, config.seed)  # range check before touching files
    train_set, test_set = data or load_mnist(config.mnist_dir)
    split = dataset.build_sslac_split(
        train_set, test_set, config.k, config.seed, config.labelled_per_class, config.unlabelled_per_class,
        config.val_fraction, unlabelled_total=config.unlabelled_total or None)
    return split, {"domain": "mnist", "test_size": len(split.test_idx)}


def split_from_manifest(path, config: trainer.TrainConfig):
    m = dataset.read_split_manifest(path)
    k = int(m["k"])
    if k != config.k:
        raise ValueError(f"split manifest has k={k} but config has k={config.k}")
    if m.get("domain", "mnist") == "dummy":
        dom = dataset.make_dummy_domain(int(m["seed"]), int(m["samples_per_blob"]))
        if tuple(dom.known_ids) != m["known_classes"]:
            raise ValueError("dummy manifest known classes do not match the generated domain")
        return dom.split
    train_set, test_set = load_mnist(config.mnist_dir)
    return dataset.split_from_manifest(m, train_set, test_set)


def open_sets(config: trainer.TrainConfig, split=None) -> dict:
    """Foreign images for open-set evaluation; the dummy domain contributes its probe points."""
    if config.domain == "dummy":
        return {"probe": dataset.make_dummy_domain(split.seed if split else config.seed,
                                                   config.dummy_samples_per_blob).open_probe_points}
    return load_foreign(config.foreign)


def evaluate_split(discriminator, split, config, fair_acc=None):
    n_novel = 3 if config.domain == "dummy" else dataset.N_CLASSES - config.k
    return evaluation.evaluate(
        discriminator, split.x_test, split.y_test, config.k, seed=config.seed,
        foreign=open_sets(config, split), known_classes=split.known_classes, n_novel_train=n_novel,
        fair_validation_accuracy=fair_acc)


# --------------------------------------------------------------------------- experiments

@dataclass
class ExperimentReport:
    k: int
    n_runs: int
    runs: list = field(default_factory=list)      # per-run dicts
    failures: int = 0
    f1_macro_mean: float | None = None
    f1_macro_std: float | None = None              # sample std; None when fewer than 2 runs completed
    open_set_mean: dict = field(default_factory=dict)
    open_set_std: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


def _mean_std(values):
    if not values:
        return None, None
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), (float(v.std(ddof=1)) if len(v) > 1 else None)


def run_experiment(k, n_runs, base_config: trainer.TrainConfig, data=None, run_seeds=None) -> ExperimentReport:
    """Repeat split -> train -> evaluate ``n_runs`` times and aggregate.

    Run ``i`` uses master seed ``base_config.seed + i`` (or ``run_seeds[i]``), so the
    known classes, split, initialisation and noise are all fresh per run. A run that
    raises is recorded with its error and left out of the aggregates.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    seeds = list(run_seeds) if run_seeds is not None else [base_config.seed + i for i in range(n_runs)]
    if len(seeds) != n_runs:
        raise ValueError("run_seeds must have n_runs entries")
    if base_config.domain == "mnist" and data is None:
        data = load_mnist(base_config.mnist_dir)
    report = ExperimentReport(k=k, n_runs=n_runs)
    for seed in seeds:
        cfg = replace(base_config, k=k, seed=seed)
        entry = {"seed": seed}
        try:
            split, _ = build_split(cfg, data)
            entry["known_classes"] = list(split.known_classes)
            _, disc, tlog = trainer.train(split, cfg)
            rep = evaluate_split(disc, split, cfg, tlog.best_accuracy)
        except (trainer.DivergenceError, ValueError, FloatingPointError) as exc:
            log.warning("run with seed %d failed: %s", seed, exc)
            entry.update(status="failed", error=str(exc))
            report.failures += 1
        else:
            entry.update(status="ok", f1_macro=rep.f1_macro, open_set_accuracy=rep.open_set_accuracy,
                         best_step=tlog.best_step, fair_validation_accuracy=tlog.best_accuracy)
        report.runs.append(entry)
    ok = [r for r in report.runs if r["status"] == "ok"]
    report.f1_macro_mean, report.f1_macro_std = _mean_std([r["f1_macro"] for r in ok])
    for name in sorted({n for r in ok for n in r["open_set_accuracy"]}):
        report.open_set_mean[name], report.open_set_std[name] = _mean_std(
            [r["open_set_accuracy"][name] for r in ok if name in r["open_set_accuracy"]])
    return report
