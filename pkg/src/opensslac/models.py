"""Generator / discriminator builders and the K+1 decision rule."""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import nn

IMAGE_SHAPE = (28, 28, 1)


@dataclass
class GeneratorSpec:
    z_length: int = 100
    base_size: int = 7
    base_filters: int = 64
    filters: tuple = (64, 32)
    bn_momentum: float = 0.8
    fused_upsample: bool = True


@dataclass
class DiscriminatorSpec:
    filters: tuple = (32, 64, 128)
    dropout: float = 0.4
    noise_std: float = 0.2
    leaky: float = 0.0


@dataclass
class MlpPairSpec:
    z_length: int = 8
    hidden: int = 64
    depth: int = 3
    dropout: float = 0.0
    noise_std: float = 0.0
    bn_momentum: float = 0.8


def spec_dict(spec):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(spec).items()}


def _act(leaky):
    return nn.LeakyReLU(leaky) if leaky else nn.ReLU()


def build_generator(spec: GeneratorSpec, seed, dtype=np.float32) -> nn.Sequential:
    if spec.z_length < 1:
        raise ValueError("z_length must be >= 1")
    rng = np.random.default_rng(seed)
    s, f0 = spec.base_size, spec.base_filters
    layers = [nn.Dense(spec.z_length, s * s * f0, rng, dtype),
              nn.BatchNorm(s * s * f0, spec.bn_momentum, dtype=dtype), nn.ReLU(),
              nn.Reshape((s, s, f0))]
    c_in = f0
    for f in spec.filters:
        if spec.fused_upsample:
            layers.append(nn.UpsampleConv2D(c_in, f, rng, dtype))
        else:
            layers += [nn.Upsample2x(), nn.Conv2D(c_in, f, 1, rng, dtype)]
        layers += [nn.BatchNorm(f, spec.bn_momentum, dtype=dtype), nn.ReLU()]
        c_in = f
    layers += [nn.Conv2D(c_in, IMAGE_SHAPE[2], 1, rng, dtype), nn.Tanh()]
    model = nn.Sequential(layers, (spec.z_length,), name="generator")
    if model.output_shape != IMAGE_SHAPE:
        raise nn.ShapeError(f"generator spec produces {model.output_shape}, expected {IMAGE_SHAPE}")
    return model


def build_discriminator(k, spec: DiscriminatorSpec, seed, dtype=np.float32) -> nn.Sequential:
    """CNN discriminator with K+1 raw logits."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    layers = [nn.GaussianNoise(spec.noise_std)]
    c_in = IMAGE_SHAPE[2]
    for f in spec.filters:
        layers += [nn.Conv2D(c_in, f, 2, rng, dtype), _act(spec.leaky), nn.Dropout(spec.dropout)]
        c_in = f
    layers.append(nn.Flatten())
    flat = nn.Sequential(layers, IMAGE_SHAPE).output_shape[0]
    layers.append(nn.Dense(flat, k + 1, rng, dtype))
    return nn.Sequential(layers, IMAGE_SHAPE, name="discriminator")


def build_mlp_generator(spec: MlpPairSpec, seed, dtype=np.float32) -> nn.Sequential:
    rng = np.random.default_rng(seed)
    layers, n_in = [], spec.z_length
    for _ in range(spec.depth):
        layers += [nn.Dense(n_in, spec.hidden, rng, dtype), nn.BatchNorm(spec.hidden, spec.bn_momentum, dtype=dtype),
                   nn.ReLU()]
        n_in = spec.hidden
    layers.append(nn.Dense(n_in, 2, rng, dtype))
    return nn.Sequential(layers, (spec.z_length,), name="generator")


def build_mlp_discriminator(k, spec: MlpPairSpec, seed, dtype=np.float32) -> nn.Sequential:
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    layers, n_in = [nn.GaussianNoise(spec.noise_std)], 2
    for _ in range(spec.depth):
        layers += [nn.Dense(n_in, spec.hidden, rng, dtype), nn.ReLU(), nn.Dropout(spec.dropout)]
        n_in = spec.hidden
    layers.append(nn.Dense(n_in, k + 1, rng, dtype))
    return nn.Sequential(layers, (2,), name="discriminator")


def classify(logits) -> np.ndarray:
    """System classes 1..K+1 by argmax; ties go to the lowest index."""
    logits = np.atleast_2d(logits)
    return np.argmax(logits, axis=1) + 1


def predict(model: nn.Sequential, x, batch_size=1000) -> np.ndarray:
    """Inference-mode logits in chunks."""
    x = np.asarray(x, dtype=next(iter(model.params)).value.dtype)
    out = [model.forward(x[i:i + batch_size], training=False) for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros((0,) + model.output_shape)
