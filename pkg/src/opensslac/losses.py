"""Open-SsLAC GAN losses as pure functions of discriminator logits.

The discriminator emits one logit vector of length K+1 per sample. The
supervised terms read it through a softmax over all K+1 entries; the adversarial
terms read only the last entry through a sigmoid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (sigmoid, softplus, softmax_cross_entropy_grad,
                 softmax_cross_entropy_with_logits)


@dataclass
class LossWeights:
    labelled_ce: float = 1.0   # supervised cross-entropy on X_L
    fake_ce: float = 1.0       # generated samples pseudo-labelled as class K+1
    gan_unlabelled: float = 1.0
    gan_labelled: float = 1.0
    gan_fake: float = 1.0


def k1_logit(logits):
    """The K+1'th column, viewed as a binary real/fake logit."""
    return np.asarray(logits)[..., -1]


def unknown_onehot(n, n_classes, dtype=np.float32):
    y = np.zeros((n, n_classes), dtype=dtype)
    y[:, -1] = 1
    return y


def generator_loss(k1_logits_fake) -> float:
    """mean log(1 - sigmoid(l)) = -mean softplus(l); minimised as fakes read as real."""
    return float(-np.mean(softplus(np.asarray(k1_logits_fake, dtype=np.float64))))


def generator_loss_grad(k1_logits_fake):
    l = np.asarray(k1_logits_fake)
    return -sigmoid(l).astype(l.dtype) / l.size


def generator_loss_nonsaturating(k1_logits_fake) -> float:
    """-mean log sigmoid(l): binary cross-entropy of the fakes against target 1."""
    return float(np.mean(softplus(-np.asarray(k1_logits_fake, dtype=np.float64))))


def generator_loss_nonsaturating_grad(k1_logits_fake):
    l = np.asarray(k1_logits_fake)
    return (sigmoid(l).astype(l.dtype) - 1) / l.size


def supervised_loss(labelled_logits, onehot, fake_logits, fake_weight=1.0) -> float:
    """Cross-entropy of X_L against its labels plus fakes against class K+1."""
    labelled_logits = np.atleast_2d(labelled_logits)
    loss = softmax_cross_entropy_with_logits(labelled_logits, onehot)
    if fake_weight:
        fake_logits = np.atleast_2d(fake_logits)
        target = unknown_onehot(len(fake_logits), fake_logits.shape[1])
        loss += fake_weight * softmax_cross_entropy_with_logits(fake_logits, target)
    return loss


def gan_discriminator_loss(k1_logits_unlabelled, k1_logits_labelled, k1_logits_fake,
                           weights=(1.0, 1.0, 1.0)) -> float:
    """Binary game at node K+1: unlabelled -> real, labelled and generated -> fake.

    -E log s(l_U) - E log(1 - s(l_L)) - E log(1 - s(l_G)).
    """
    wu, wl, wg = weights
    u = np.asarray(k1_logits_unlabelled, dtype=np.float64)
    l = np.asarray(k1_logits_labelled, dtype=np.float64)
    g = np.asarray(k1_logits_fake, dtype=np.float64)
    return float(wu * np.mean(softplus(-u)) + wl * np.mean(softplus(l)) + wg * np.mean(softplus(g)))


def total_discriminator_loss(supervised, gan) -> float:
    return supervised + gan


def discriminator_objective(logits_l, onehot_l, logits_u, logits_g, weights: LossWeights | None = None):
    """Supervised and GAN discriminator losses with their logit gradients.

    Returns ``(supervised, gan, dlogits_l, dlogits_u, dlogits_g)``.
    """
    w = weights or LossWeights()
    dl = np.zeros_like(logits_l)
    du = np.zeros_like(logits_u)
    dg = np.zeros_like(logits_g)
    fake_target = unknown_onehot(len(logits_g), logits_g.shape[1], logits_g.dtype)

    sup = 0.0
    if w.labelled_ce:
        sup += w.labelled_ce * softmax_cross_entropy_with_logits(logits_l, onehot_l)
        dl += w.labelled_ce * softmax_cross_entropy_grad(logits_l, onehot_l).astype(dl.dtype)
    if w.fake_ce:
        sup += w.fake_ce * softmax_cross_entropy_with_logits(logits_g, fake_target)
        dg += w.fake_ce * softmax_cross_entropy_grad(logits_g, fake_target).astype(dg.dtype)

    u, l, g = k1_logit(logits_u), k1_logit(logits_l), k1_logit(logits_g)
    gan = gan_discriminator_loss(u, l, g, (w.gan_unlabelled, w.gan_labelled, w.gan_fake))
    du[:, -1] += w.gan_unlabelled * (sigmoid(u) - 1).astype(du.dtype) / len(u)
    dl[:, -1] += w.gan_labelled * sigmoid(l).astype(dl.dtype) / len(l)
    dg[:, -1] += w.gan_fake * sigmoid(g).astype(dg.dtype) / len(g)
    return sup, gan, dl, du, dg
