"""The binary game at the K+1'th logit, one number at a time.

The discriminator wants unlabelled samples to read as real and both labelled
and generated samples to read as fake; the generator wants its samples to read
as real. The supervised head meanwhile pseudo-labels generated samples as the
unknown class.
"""
import numpy as np

from opensslac import losses

print("discriminator GAN loss, (unlabelled, labelled, generated) logits at the K+1 node")
for u, l, g in [(0, 0, 0), (10, -10, -10), (-10, 10, -10), (3, -3, 3)]:
    val = losses.gan_discriminator_loss(np.array([u]), np.array([l]), np.array([g]))
    print(f"  ({u:+3d}, {l:+3d}, {g:+3d}) -> {val:.6f}")

print("\ngenerator loss mean log(1 - s(l)) as the fakes look more real")
for l in (-10, -2, 0, 2, 10):
    print(f"  l = {l:+3d}: saturating {losses.generator_loss(np.array([float(l)])):+.6f}"
          f"   non-saturating {losses.generator_loss_nonsaturating(np.array([float(l)])):+.6f}")

print("\nsupervised loss: labelled sample of class 1 plus one fake, K = 2")
labelled = np.array([[4.0, 0.0, 0.0]])
onehot = np.array([[1.0, 0.0, 0.0]])
for fake in ([0.0, 0.0, 0.0], [0.0, 0.0, 6.0], [5.0, 0.0, 0.0]):
    val = losses.supervised_loss(labelled, onehot, np.array([fake]))
    print(f"  fake logits {fake} -> {val:.4f}")
