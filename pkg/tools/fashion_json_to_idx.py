"""Convert the per-class JSON dump of Fashion-MNIST into IDX files.

The dump holds 7000 flattened 28x28 images per class (train and test pooled,
with a few empty rows). The last ``--per-class`` valid rows of every class are
written as the held-out image/label pair.

    python3 tools/fashion_json_to_idx.py /path/to/clothes /root/data/fashion
"""
import argparse
import json
from pathlib import Path

import numpy as np

from opensslac.dataset import write_idx


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("json_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--per-class", type=int, default=1000)
    args = ap.parse_args(argv)

    images, labels = [], []
    for c in range(10):
        rows = json.loads((Path(args.json_dir) / f"{c}.json").read_text())["data"]
        rows = [r for r in rows if len(r) == 784][-args.per_class:]
        images.append(np.asarray(rows, dtype=np.uint8).reshape(-1, 28, 28))
        labels.append(np.full(len(rows), c, dtype=np.uint8))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "t10k-images.idx3-ubyte", np.concatenate(images))
    write_idx(out / "t10k-labels.idx1-ubyte", np.concatenate(labels))
    print(f"wrote {sum(len(x) for x in images)} images to {out}")


if __name__ == "__main__":
    main()
