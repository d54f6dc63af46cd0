"""One MNIST run with two known digits, then Fashion-MNIST as unseen data.

Expects the four MNIST IDX files in MNIST_DIR and a Fashion-MNIST test image
file (see tools/fashion_json_to_idx.py). On one CPU core this takes roughly an
hour and a half.

    python3 demos/mnist_open_set.py /root/data/mnist /root/data/fashion/t10k-images.idx3-ubyte
"""
import logging
import sys

from opensslac import pipeline, trainer

logging.basicConfig(level=logging.INFO, format="%(message)s")
mnist_dir, fashion = sys.argv[1], sys.argv[2]

cfg = trainer.TrainConfig(domain="mnist", k=2, seed=0, mnist_dir=mnist_dir, foreign=(f"fashion={fashion}",))
split, _ = pipeline.build_split(cfg)
print(f"known digits {split.known_classes}: {len(split.labelled_idx)} labelled, "
      f"{len(split.validation_idx)} validation, {len(split.unlabelled_idx)} unlabelled")

gen, disc, tlog = trainer.train(split, cfg)
report = pipeline.evaluate_split(disc, split, cfg, tlog.best_accuracy)
print(report.summary())
