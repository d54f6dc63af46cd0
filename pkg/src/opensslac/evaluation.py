"""K+1 metrics, open-set accuracy and decision-boundary rasters."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import models


def confusion_matrix(predictions, truths, n_classes) -> np.ndarray:
    """Counts with truth i (row) predicted j (column), classes 1..n_classes."""
    p = np.asarray(predictions, dtype=np.int64)
    t = np.asarray(truths, dtype=np.int64)
    if p.shape != t.shape:
        raise ValueError(f"{len(p)} predictions but {len(t)} truths")
    for name, v in (("prediction", p), ("truth", t)):
        if v.size and (v.min() < 1 or v.max() > n_classes):
            raise ValueError(f"{name} class outside 1..{n_classes}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t - 1, p - 1), 1)
    return cm


def per_class_f1(confusion) -> np.ndarray:
    """F1 = 2PR/(P+R) per class; 0 where the class has no true positives."""
    cm = np.asarray(confusion, dtype=np.float64)
    if cm.sum() == 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(cm)
    denom = cm.sum(axis=0) + cm.sum(axis=1)  # predicted + actual = 2TP + FP + FN
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(denom > 0, 2 * tp / denom, 0.0)
    return f1


def f1_macro(confusion) -> float:
    return float(per_class_f1(confusion).mean())


def open_set_accuracy(discriminator, foreign_images) -> float:
    """Fraction of foreign samples classified into the unknown class K+1."""
    x = np.asarray(foreign_images)
    if tuple(x.shape[1:]) != discriminator.input_shape:
        raise ValueError(f"foreign samples shaped {x.shape[1:]}, model expects {discriminator.input_shape}")
    pred = models.classify(models.predict(discriminator, x))
    return float(np.mean(pred == discriminator.output_shape[0]))


@dataclass
class EvalReport:
    k: int
    seed: int
    f1_macro: float
    per_class_f1: list
    confusion: list
    accuracy: float
    open_set_accuracy: dict = field(default_factory=dict)
    n_novel_train: int | None = None
    n_open: int | None = None
    known_classes: list = field(default_factory=list)
    fair_validation_accuracy: float | None = None

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def write(self, path):
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def read(cls, path):
        return cls(**json.loads(Path(path).read_text()))

    def summary(self):
        lines = [f"k={self.k} seed={self.seed} known={self.known_classes}",
                 f"F1-macro (K+1 system): {self.f1_macro:.4f}   accuracy: {self.accuracy:.4f}",
                 "per-class F1: " + " ".join(f"{v:.3f}" for v in self.per_class_f1)]
        for name, acc in self.open_set_accuracy.items():
            lines.append(f"open-set accuracy [{name}]: {acc:.4f}")
        return "\n".join(lines)


def evaluate(discriminator, x_test, y_test, k, seed=0, foreign=None, known_classes=(), n_novel_train=None,
             fair_validation_accuracy=None) -> EvalReport:
    pred = models.classify(models.predict(discriminator, x_test))
    cm = confusion_matrix(pred, y_test, k + 1)
    opens = {name: open_set_accuracy(discriminator, x) for name, x in (foreign or {}).items()}
    return EvalReport(
        k=k, seed=seed, f1_macro=f1_macro(cm), per_class_f1=per_class_f1(cm).tolist(),
        confusion=cm.tolist(), accuracy=float(np.trace(cm) / cm.sum()),
        open_set_accuracy=opens, n_novel_train=n_novel_train, n_open=None if not foreign else len(foreign),
        known_classes=list(known_classes), fair_validation_accuracy=fair_validation_accuracy)


# --------------------------------------------------------------------------- raster

# blue is reserved for the unknown class
UNKNOWN_COLOR = (40, 90, 220)
KNOWN_COLORS = [(245, 150, 40), (60, 170, 80), (240, 210, 40), (200, 60, 60), (150, 90, 200),
                (120, 80, 40), (230, 120, 190), (130, 130, 130), (160, 200, 60)]


def boundary_raster(discriminator, bounds, resolution) -> np.ndarray:
    """Class (1..K+1) at every cell centre of a ``resolution`` x ``resolution`` grid.

    ``bounds`` is ``(xmin, xmax, ymin, ymax)``. Row 0 is the top edge (ymax).
    """
    if discriminator.input_shape != (2,):
        raise ValueError(f"boundary raster needs a 2-D input model, got input shape {discriminator.input_shape}")
    if resolution < 16:
        raise ValueError("resolution must be >= 16")
    xmin, xmax, ymin, ymax = bounds
    xs = xmin + (np.arange(resolution) + 0.5) * (xmax - xmin) / resolution
    ys = ymax - (np.arange(resolution) + 0.5) * (ymax - ymin) / resolution
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    return models.classify(models.predict(discriminator, pts, batch_size=8192)).reshape(resolution, resolution)


def cell_of(point, bounds, resolution):
    """(row, col) of the raster cell containing ``point``."""
    xmin, xmax, ymin, ymax = bounds
    col = int((point[0] - xmin) / (xmax - xmin) * resolution)
    row = int((ymax - point[1]) / (ymax - ymin) * resolution)
    return min(max(row, 0), resolution - 1), min(max(col, 0), resolution - 1)


def raster_to_text(grid) -> str:
    return "\n".join(" ".join(str(int(v)) for v in row) for row in grid) + "\n"


def raster_from_text(text) -> np.ndarray:
    return np.array([[int(v) for v in line.split()] for line in text.splitlines() if line.strip()])


def raster_to_ppm(grid, n_classes) -> bytes:
    """Binary PPM (P6) with one colour per class; class K+1 is blue."""
    palette = np.array(KNOWN_COLORS[: n_classes - 1] + [UNKNOWN_COLOR], dtype=np.uint8)
    rgb = palette[np.asarray(grid) - 1]
    h, w = rgb.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes()


def write_raster(stem, grid, n_classes):
    stem = Path(stem)
    txt, ppm = stem.with_suffix(".txt"), stem.with_suffix(".ppm")
    txt.write_text(raster_to_text(grid))
    ppm.write_bytes(raster_to_ppm(grid, n_classes))
    return txt, ppm
