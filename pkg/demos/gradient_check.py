"""Finite-difference check of the engine against its analytic gradients.

Every layer kind is wrapped in a one-layer model and compared in float64; the
worst element-wise relative error is printed per layer.
"""
import numpy as np

from opensslac import nn

rng = np.random.default_rng(0)
f64 = np.float64


def linear_loss(out):
    r = np.random.default_rng(1).normal(size=out.shape)
    return float((out * r).sum()), r


cases = {
    "dense": ([nn.Dense(5, 4, rng, f64)], (5,)),
    "conv 3x3 stride 1": ([nn.Conv2D(2, 3, 1, rng, f64)], (5, 5, 2)),
    "conv 3x3 stride 2": ([nn.Conv2D(2, 3, 2, rng, f64)], (6, 6, 2)),
    "upsample x2": ([nn.Upsample2x()], (3, 3, 2)),
    "upsample x2 + conv (fused)": ([nn.UpsampleConv2D(2, 3, rng, f64)], (3, 4, 2)),
    "batch norm (training)": ([nn.BatchNorm(3, dtype=f64)], (4, 3)),
    "tanh": ([nn.Tanh()], (7,)),
    "dropout": ([nn.Dropout(0.4)], (7,)),
    "gaussian noise": ([nn.GaussianNoise(0.2)], (7,)),
}
for name, (layers, shape) in cases.items():
    model = nn.Sequential(layers, shape)
    err = nn.grad_check(model, rng.normal(size=(4,) + shape), linear_loss, eps=1e-4, training=True)
    print(f"{name:28s} {err:.2e}")
