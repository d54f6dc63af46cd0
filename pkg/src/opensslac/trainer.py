"""Alternating open-SsLAC training with fair-validation early stopping."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import losses, models, nn
from .dataset import SsLacSplit, onehot

log = logging.getLogger(__name__)

# streams fanned out from the master seed
STREAM_SPLIT, STREAM_GEN_INIT, STREAM_DISC_INIT, STREAM_TRAIN = 0, 1, 2, 3


class DivergenceError(RuntimeError):
    def __init__(self, step, losses_):
        super().__init__(f"non-finite loss at step {step}: {losses_}")
        self.step = step


@dataclass
class TrainConfig:
    # run
    domain: str = "mnist"            # "mnist" or "dummy"
    k: int = 2
    seed: int = 0
    # optimisation
    batch_size: int = 128
    z_length: int = 100
    z_distribution: str = "normal"   # "normal" or "uniform"
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    max_steps: int = 0               # 0: 5000 for mnist, 3000 for dummy
    min_steps_before_stopping: int = 1000
    patience: int = 500
    eval_every: int = 50
    generator_objective: str = "saturating"   # or "non_saturating"
    # loss term weights
    w_labelled_ce: float = 1.0
    w_fake_ce: float = 1.0
    w_gan_unlabelled: float = 1.0
    w_gan_labelled: float = 1.0
    w_gan_fake: float = 1.0
    # CNN architecture
    gen_base_filters: int = 64
    gen_filters: tuple = (64, 32)
    gen_bn_momentum: float = 0.8
    disc_filters: tuple = (32, 64, 128)
    disc_dropout: float = 0.4
    disc_noise_std: float = 0.2
    disc_leaky: float = 0.0
    # dummy-domain MLP pair
    mlp_hidden: int = 64
    mlp_depth: int = 3
    mlp_dropout: float = 0.0
    mlp_noise_std: float = 0.0
    # data
    mnist_dir: str = ""
    foreign: tuple = ()              # name=images_path pairs for open-set evaluation
    labelled_per_class: int = 1400
    unlabelled_per_class: int = 4200
    unlabelled_total: int = 0        # > 0 overrides unlabelled_per_class
    val_fraction: float = 0.2
    dummy_samples_per_blob: int = 200

    def __post_init__(self):
        if not self.max_steps:
            self.max_steps = 3000 if self.domain == "dummy" else 5000
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.min_steps_before_stopping > self.max_steps:
            raise ValueError("min_steps_before_stopping must not exceed max_steps")
        if self.domain not in ("mnist", "dummy"):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.generator_objective not in ("saturating", "non_saturating"):
            raise ValueError(f"unknown generator_objective {self.generator_objective!r}")
        if self.z_distribution not in ("normal", "uniform"):
            raise ValueError(f"unknown z_distribution {self.z_distribution!r}")
        self.gen_filters = tuple(self.gen_filters)
        self.disc_filters = tuple(self.disc_filters)
        self.foreign = tuple(self.foreign)

    @property
    def weights(self):
        return losses.LossWeights(self.w_labelled_ce, self.w_fake_ce, self.w_gan_unlabelled,
                                  self.w_gan_labelled, self.w_gan_fake)

    def stream(self, which):
        return np.random.default_rng([self.seed, which])

    def to_dict(self):
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def build_models(config: TrainConfig):
    """(generator, discriminator) initialised from the config's seed streams."""
    g_seed = int(config.stream(STREAM_GEN_INIT).integers(2**31))
    d_seed = int(config.stream(STREAM_DISC_INIT).integers(2**31))
    if config.domain == "dummy":
        spec = models.MlpPairSpec(z_length=config.z_length, hidden=config.mlp_hidden, depth=config.mlp_depth,
                                  dropout=config.mlp_dropout, noise_std=config.mlp_noise_std,
                                  bn_momentum=config.gen_bn_momentum)
        return models.build_mlp_generator(spec, g_seed), models.build_mlp_discriminator(config.k, spec, d_seed)
    gspec = models.GeneratorSpec(z_length=config.z_length, base_filters=config.gen_base_filters,
                                 filters=config.gen_filters, bn_momentum=config.gen_bn_momentum)
    dspec = models.DiscriminatorSpec(filters=config.disc_filters, dropout=config.disc_dropout,
                                     noise_std=config.disc_noise_std, leaky=config.disc_leaky)
    return models.build_generator(gspec, g_seed), models.build_discriminator(config.k, dspec, d_seed)


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    best_step: int | None = None
    best_accuracy: float | None = None
    stop_reason: str = ""
    diverged_at: int | None = None

    def append(self, record):
        if self.records and record["step"] <= self.records[-1]["step"]:
            raise ValueError("TrainLog records must be strictly increasing in step")
        self.records.append(record)

    def evaluations(self):
        return [(r["step"], r["val_acc"]) for r in self.records if r.get("val_acc") is not None]

    def write(self, path):
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r) + "\n")
            fh.write(json.dumps({"best_step": self.best_step, "best_accuracy": self.best_accuracy,
                                 "stop_reason": self.stop_reason, "diverged_at": self.diverged_at}) + "\n")

    @classmethod
    def read(cls, path):
        lines = [json.loads(s) for s in Path(path).read_text().splitlines() if s.strip()]
        tail = lines.pop()
        return cls(records=lines, **tail)


def fair_validation_accuracy(discriminator, x_val, y_val) -> float:
    """Fraction of known-class validation samples classified into their class.

    A K+1 prediction counts as wrong.
    """
    if len(x_val) == 0:
        raise ValueError("empty validation set")
    pred = models.classify(models.predict(discriminator, x_val))
    return float(np.mean(pred == np.asarray(y_val)))


class _BatchSampler:
    """Class-balanced labelled batches and uniform unlabelled batches."""

    def __init__(self, split: SsLacSplit, rng):
        self.rng = rng
        self.by_class = [np.flatnonzero(split.y_labelled == c) for c in range(1, split.k + 1)]
        self.n_unlabelled = len(split.x_unlabelled)

    def labelled(self, n):
        k = len(self.by_class)
        counts = np.full(k, n // k)
        counts[self.rng.permutation(k)[: n % k]] += 1
        return np.concatenate([self.rng.choice(idx, size=c) for idx, c in zip(self.by_class, counts)])

    def unlabelled(self, n):
        return self.rng.integers(self.n_unlabelled, size=n)


def _noise(config, rng, n):
    if config.z_distribution == "uniform":
        return rng.uniform(-1.0, 1.0, size=(n, config.z_length)).astype(np.float32)
    return rng.standard_normal((n, config.z_length), dtype=np.float32)


def train(split: SsLacSplit, config: TrainConfig, generator=None, discriminator=None, callback=None):
    """Train the GAN pair; returns ``(generator, discriminator, TrainLog)`` at the best checkpoint.

    Each step performs one discriminator update on (labelled, unlabelled, generated)
    batches, then one generator update on the same noise. Fair-validation accuracy
    is evaluated every ``eval_every`` steps; from ``min_steps_before_stopping`` on,
    the best-scoring parameters are retained and training stops after ``patience``
    steps without improvement or at ``max_steps``.
    """
    if split.k != config.k:
        raise ValueError(f"split has k={split.k} but config has k={config.k}")
    if generator is None or discriminator is None:
        generator, discriminator = build_models(config)
    rng = config.stream(STREAM_TRAIN)
    sampler = _BatchSampler(split, rng)
    opt_d = nn.Adam(discriminator.params, config.learning_rate, config.beta1, config.beta2)
    opt_g = nn.Adam(generator.params, config.learning_rate, config.beta1, config.beta2)
    weights = config.weights
    n_cls = config.k + 1
    onehot_all = onehot(split.y_labelled, n_cls)
    b = config.batch_size
    if config.generator_objective == "saturating":
        g_loss_fn, g_grad_fn = losses.generator_loss, losses.generator_loss_grad
    else:
        g_loss_fn, g_grad_fn = losses.generator_loss_nonsaturating, losses.generator_loss_nonsaturating_grad

    tlog = TrainLog()
    best_state = None
    t0 = time.time()
    for step in range(1, config.max_steps + 1):
        li = sampler.labelled(b)
        ui = sampler.unlabelled(b)
        z = _noise(config, rng, b)

        fake = generator.forward(z, training=True, rng=rng)
        batch = np.concatenate([split.x_labelled[li], split.x_unlabelled[ui], fake])
        logits = discriminator.forward(batch, training=True, rng=rng)
        ll, lu, lg = logits[:b], logits[b:2 * b], logits[2 * b:]
        sup, gan, dl, du, dg = losses.discriminator_objective(ll, onehot_all[li], lu, lg, weights)
        discriminator.params.zero_grad()
        discriminator.backward(np.concatenate([dl, du, dg]))
        opt_d.step()

        lg = discriminator.forward(fake, training=True, rng=rng)
        g_loss = g_loss_fn(losses.k1_logit(lg))
        dlg = np.zeros_like(lg)
        dlg[:, -1] = g_grad_fn(losses.k1_logit(lg))
        discriminator.params.zero_grad()
        dfake = discriminator.backward(dlg)
        discriminator.params.zero_grad()
        generator.params.zero_grad()
        generator.backward(dfake)
        opt_g.step()

        record = {"step": step, "g_loss": g_loss, "d_supervised": sup, "d_gan": gan}
        if not np.isfinite([g_loss, sup, gan]).all():
            tlog.append(record)
            tlog.diverged_at = step
            tlog.stop_reason = "diverged"
            raise DivergenceError(step, record)

        last = step == config.max_steps
        if step % config.eval_every == 0 or last:
            acc = fair_validation_accuracy(discriminator, split.x_validation, split.y_validation)
            record["val_acc"] = acc
            if step >= config.min_steps_before_stopping and (tlog.best_accuracy is None or acc >= tlog.best_accuracy):
                tlog.best_accuracy, tlog.best_step = acc, step
                best_state = (generator.state(), discriminator.state())
            log.info("step %d  g %.4f  d_sup %.4f  d_gan %.4f  val %.4f  (%.0fs)",
                     step, g_loss, sup, gan, acc, time.time() - t0)
        tlog.append(record)
        if callback is not None:
            callback(step, record, generator, discriminator)
        if (tlog.best_step is not None and step >= config.min_steps_before_stopping
                and step - tlog.best_step >= config.patience):
            tlog.stop_reason = "patience"
            break
    else:
        tlog.stop_reason = "max_steps"

    if best_state is not None:
        generator.load_state(best_state[0])
        discriminator.load_state(best_state[1])
    return generator, discriminator, tlog
