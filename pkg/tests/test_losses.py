import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from opensslac import losses, nn

LN2 = math.log(2)


def test_generator_loss_at_zero():
    assert losses.generator_loss(np.zeros(8)) == pytest.approx(-LN2, abs=1e-6)


@pytest.mark.parametrize("logit,expected", [(10.0, -10.000045398899218), (-10.0, -4.539889921686465e-05)])
def test_generator_loss_values(logit, expected):
    assert round(losses.generator_loss(np.array([logit])) - expected, 6) == 0


def test_supervised_uniform_labelled_term():
    y = np.eye(4)[[0, 1, 2, 3]]
    assert losses.supervised_loss(np.zeros((4, 4)), y, None, fake_weight=0) == pytest.approx(math.log(4), abs=1e-6)


def test_supervised_saturated_fake_term_vanishes():
    fake = np.array([[-50.0, -50.0, -50.0, 50.0]] * 3)
    y = np.eye(4)[[0, 1, 2]]
    lab = np.where(y > 0, 60.0, -60.0)
    assert losses.supervised_loss(lab, y, fake) == pytest.approx(0.0, abs=1e-6)


def test_supervised_hand_value():
    loss = losses.supervised_loss(np.array([[1.0, 2.0, 3.0]]), np.array([[1.0, 0, 0]]), None, fake_weight=0)
    assert round(loss - 2.40760596444438, 6) == 0


def test_gan_loss_at_zero():
    z = np.zeros(5)
    assert losses.gan_discriminator_loss(z, z, z) == pytest.approx(3 * LN2, abs=1e-6)


def test_gan_loss_winning_discriminator():
    u, l, g = np.full(4, 10.0), np.full(4, -10.0), np.full(4, -10.0)
    assert round(losses.gan_discriminator_loss(u, l, g) - 0.00013619669765059395, 6) == 0


def test_gan_loss_swap_is_worse():
    u, l, g = np.full(4, 10.0), np.full(4, -10.0), np.full(4, -10.0)
    assert losses.gan_discriminator_loss(l, u, g) > losses.gan_discriminator_loss(u, l, g)


@pytest.mark.parametrize("a,b,expected", [(1.0, 2.0, 3.0), (0.0, 1.7, 1.7),
                                          (math.log(4), 3 * LN2, 3.465735902799726)])
def test_total_discriminator_loss(a, b, expected):
    assert round(losses.total_discriminator_loss(a, b) - expected, 6) == 0


def test_losses_finite_at_extreme_logits():
    big = np.array([1e4, -1e4])
    assert np.isfinite(losses.generator_loss(big))
    assert np.isfinite(losses.generator_loss_nonsaturating(big))
    assert np.isfinite(losses.gan_discriminator_loss(big, big, big))
    lg = np.array([[1e4, -1e4, 0.0], [-1e4, 1e4, 1e4]])
    y = np.eye(3)[[1, 0]]
    assert np.isfinite(losses.supervised_loss(lg, y, lg))
    for arr in losses.discriminator_objective(lg, y, lg, lg)[2:]:
        assert np.isfinite(arr).all()


@given(st.floats(-30, 30), st.floats(0.01, 5))
def test_monotonicity(x, d):
    a, b = np.array([x]), np.array([x + d])
    z = np.zeros(1)
    assert losses.generator_loss(b) <= losses.generator_loss(a)
    assert losses.gan_discriminator_loss(z, b, z) >= losses.gan_discriminator_loss(z, a, z)
    assert losses.gan_discriminator_loss(z, z, b) >= losses.gan_discriminator_loss(z, z, a)
    assert losses.gan_discriminator_loss(b, z, z) <= losses.gan_discriminator_loss(a, z, z)


def test_adversarial_opposition_at_k1_node():
    g = np.linspace(-6, 6, 13)
    _, _, _, _, dg = losses.discriminator_objective(
        np.zeros((1, 3)), np.eye(3)[[0]], np.zeros((1, 3)), np.stack([np.zeros_like(g)] * 2 + [g], axis=1),
        losses.LossWeights(labelled_ce=0, fake_ce=0))
    gen = losses.generator_loss_grad(g)
    assert np.all(np.sign(dg[:, -1]) == -np.sign(gen))


def test_zero_fake_weight_is_plain_cross_entropy():
    rng = np.random.default_rng(3)
    lg = rng.normal(size=(6, 4))
    y = np.eye(4)[rng.integers(4, size=6)]
    fake = rng.normal(size=(6, 4))
    assert losses.supervised_loss(lg, y, fake, fake_weight=0) == nn.softmax_cross_entropy_with_logits(lg, y)


def test_supervised_rejects_bad_onehot():
    with pytest.raises(ValueError):
        losses.supervised_loss(np.zeros((1, 3)), np.array([[0.5, 0.5, 0]]), np.zeros((1, 3)))


def test_objective_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    ll, lu, lg = (rng.normal(size=(4, 3)) for _ in range(3))
    y = np.eye(3)[[0, 1, 0, 1]]

    def total(ll, lu, lg):
        sup, gan, *_ = losses.discriminator_objective(ll, y, lu, lg)
        return sup + gan

    grads = losses.discriminator_objective(ll, y, lu, lg)[2:]
    eps = 1e-6
    for which, (arr, grad) in enumerate(zip((ll, lu, lg), grads)):
        for idx in np.ndindex(arr.shape):
            args = [ll.copy(), lu.copy(), lg.copy()]
            args[which][idx] += eps
            up = total(*args)
            args[which][idx] -= 2 * eps
            num = (up - total(*args)) / (2 * eps)
            assert grad[idx] == pytest.approx(num, abs=1e-6)


@pytest.mark.parametrize("fn,grad", [(losses.generator_loss, losses.generator_loss_grad),
                                     (losses.generator_loss_nonsaturating,
                                      losses.generator_loss_nonsaturating_grad)])
def test_generator_gradients(fn, grad):
    x = np.array([-3.0, -0.5, 0.0, 2.0])
    eps = 1e-6
    num = [(fn(x + eps * e) - fn(x - eps * e)) / (2 * eps) for e in np.eye(4)]
    assert grad(x) == pytest.approx(num, abs=1e-7)
