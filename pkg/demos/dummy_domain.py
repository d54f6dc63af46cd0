"""Train the K+1 classifier on the six-blob plane and draw its decision map.

Three blobs carry labels, the other three only show up unlabelled. After
training, the known blobs should keep their own classes, the unlabelled-only
blobs should fall into the unknown class, and the map tells how far the unknown
class reaches into empty space.

    python3 demos/dummy_domain.py [seed]
"""
import sys

import numpy as np

from opensslac import dataset, evaluation, models, trainer

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
dom = dataset.make_dummy_domain(seed=seed)
cfg = trainer.TrainConfig(domain="dummy", k=3, seed=seed)
print(f"known blobs {dom.known_ids}, centres:\n{dom.blob_centers}")

gen, disc, tlog = trainer.train(dom.split, cfg)
print(f"best step {tlog.best_step}, fair-validation accuracy {tlog.best_accuracy:.3f} ({tlog.stop_reason})")

split = dom.split
pred = models.classify(models.predict(disc, split.x_test))
known = split.y_test <= 3
print(f"known-class accuracy      {np.mean(pred[known] == split.y_test[known]):.3f}")
print(f"unlabelled-only -> K+1    {np.mean(pred[~known] == 4):.3f}")
print(f"open probe points -> K+1  {evaluation.open_set_accuracy(disc, dom.open_probe_points):.3f}")

# coarse map: a/b/c for the known classes, '.' for the unknown class, '*' where generated samples land
bounds = (-14.0, 14.0, -14.0, 14.0)
grid = evaluation.boundary_raster(disc, bounds, 56)
chars = np.array(list("abc."))[grid - 1]
z = np.random.default_rng(0).standard_normal((300, cfg.z_length), dtype=np.float32)
for p in gen.forward(z):
    r, c = evaluation.cell_of(p, bounds, 56)
    chars[r, c] = "*"
print("\n".join("".join(row) for row in chars))

txt, ppm = evaluation.write_raster("dummy_boundary", evaluation.boundary_raster(disc, bounds, 256), 4)
print(f"wrote {txt} and {ppm}")
