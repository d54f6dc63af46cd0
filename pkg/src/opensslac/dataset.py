"""IDX parsing, SsLAC split construction and the six-blob dummy domain."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IDX_TYPES = {0x08: np.dtype(">u1")}
N_CLASSES = 10


class IdxFormatError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def parse_idx(data: bytes) -> np.ndarray:
    """Decode an IDX byte string into an array of its declared shape."""
    data = bytes(data)
    if len(data) < 4:
        raise IdxFormatError("truncated header", len(data))
    if data[0] != 0 or data[1] != 0:
        raise IdxFormatError("bad magic: first two bytes must be zero", 0)
    type_code, ndim = data[2], data[3]
    if type_code not in IDX_TYPES:
        raise IdxFormatError(f"unsupported type code 0x{type_code:02x}", 2)
    if ndim == 0 or ndim > 4:
        raise IdxFormatError(f"unsupported dimension count {ndim}", 3)
    header = 4 + 4 * ndim
    if len(data) < header:
        raise IdxFormatError("truncated dimension sizes", len(data))
    dims = struct.unpack(f">{ndim}I", data[4:header])
    dtype = IDX_TYPES[type_code]
    expected = int(np.prod(dims)) * dtype.itemsize
    payload = len(data) - header
    if payload < expected:
        raise IdxFormatError(f"truncated payload: expected {expected} bytes, found {payload}", len(data))
    if payload > expected:
        raise IdxFormatError(f"trailing bytes after payload: expected {expected}, found {payload}", header + expected)
    return np.frombuffer(data, dtype=dtype, offset=header, count=int(np.prod(dims))).reshape(dims).astype(np.uint8)


def serialize_idx(array) -> bytes:
    array = np.asarray(array)
    if array.ndim == 0 or array.ndim > 4:
        raise ValueError(f"IDX supports 1 to 4 dimensions, got {array.ndim}")
    if array.size and (array.min() < 0 or array.max() > 255):
        raise ValueError("IDX unsigned-byte payload must lie in [0, 255]")
    header = bytes([0, 0, 0x08, array.ndim]) + struct.pack(f">{array.ndim}I", *array.shape)
    return header + np.ascontiguousarray(array, dtype=np.uint8).tobytes()


def read_idx(path) -> np.ndarray:
    return parse_idx(Path(path).read_bytes())


def write_idx(path, array):
    Path(path).write_bytes(serialize_idx(array))


@dataclass(frozen=True)
class ImageSet:
    images: np.ndarray  # (count, 28, 28, 1) uint8
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.labels is not None and len(self.labels) != len(self.images):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.images)


def load_image_set(images_path, labels_path=None) -> ImageSet:
    images = read_idx(images_path)
    if images.ndim == 3:
        images = images[..., None]
    labels = read_idx(labels_path) if labels_path else None
    return ImageSet(images, labels)


def normalize(images) -> np.ndarray:
    """Map [0, 255] pixels to [-1, 1] via x / 127.5 - 1."""
    return (np.asarray(images, dtype=np.float32) / np.float32(127.5) - np.float32(1.0))


# --------------------------------------------------------------------------- SsLAC split

@dataclass(frozen=True)
class SsLacSplit:
    """Four-way partition with labels in system classes 1..K+1.

    Index arrays point into the source train / test sets; ``x_*`` hold the samples.
    """

    known_classes: tuple
    seed: int
    labelled_idx: np.ndarray
    unlabelled_idx: np.ndarray
    validation_idx: np.ndarray
    test_idx: np.ndarray
    x_labelled: np.ndarray
    y_labelled: np.ndarray
    x_unlabelled: np.ndarray
    x_validation: np.ndarray
    y_validation: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    source_labels_unlabelled: np.ndarray | None = None
    source_labels_test: np.ndarray | None = None

    @property
    def k(self):
        return len(self.known_classes)

    def onehot_labelled(self):
        return onehot(self.y_labelled, self.k + 1)


def onehot(system_labels, n_classes):
    """One-hot rows for system classes 1..n_classes."""
    system_labels = np.asarray(system_labels)
    out = np.zeros((len(system_labels), n_classes), dtype=np.float32)
    out[np.arange(len(system_labels)), system_labels - 1] = 1.0
    return out


def system_labels(original, known_classes):
    """Known class known_classes[i] -> i + 1; everything else -> K + 1."""
    original = np.asarray(original)
    k = len(known_classes)
    out = np.full(original.shape, k + 1, dtype=np.int64)
    for i, c in enumerate(known_classes):
        out[original == c] = i + 1
    return out


def choose_known_classes(k, seed, n_classes=N_CLASSES):
    if not 1 <= k <= n_classes - 1:
        raise ValueError(f"k must be in [1, {n_classes - 1}], got {k}")
    rng = np.random.default_rng([seed, 0])
    return tuple(int(c) for c in np.sort(rng.choice(n_classes, size=k, replace=False)))


def build_sslac_split(train_set: ImageSet, test_set: ImageSet, k, seed, labelled_per_class=1400,
                      unlabelled_per_class=4200, val_fraction=0.2, unlabelled_total=None,
                      prepare=normalize) -> SsLacSplit:
    """Build an SsLAC split with a class-distribution mismatch.

    ``labelled_per_class`` samples of each known class are split into labelled
    training (1 - val_fraction) and fair validation (val_fraction). The unlabelled
    set draws ``unlabelled_per_class`` samples from every one of the 10 classes
    (or ``unlabelled_total`` spread evenly, when given), disjoint from both.
    """
    if not 0 < val_fraction < 1:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    known = choose_known_classes(k, seed)
    if unlabelled_total is not None:
        unlabelled_per_class = int(unlabelled_total) // N_CLASSES
    n_val = int(round(labelled_per_class * val_fraction))
    rng = np.random.default_rng([seed, 1])
    labels = np.asarray(train_set.labels)
    lab, val, unl = [], [], []
    for c in range(N_CLASSES):
        pool = np.flatnonzero(labels == c)
        need = unlabelled_per_class + (labelled_per_class if c in known else 0)
        if len(pool) < need:
            raise ValueError(f"class {c} has {len(pool)} samples, {need} required")
        perm = rng.permutation(pool)
        if c in known:
            val.append(perm[:n_val])
            lab.append(perm[n_val:labelled_per_class])
            perm = perm[labelled_per_class:]
        unl.append(perm[:unlabelled_per_class])
    lab_idx = np.sort(np.concatenate(lab))
    val_idx = np.sort(np.concatenate(val))
    unl_idx = np.sort(np.concatenate(unl))
    test_idx = np.arange(len(test_set))
    return SsLacSplit(
        known_classes=known, seed=seed,
        labelled_idx=lab_idx, unlabelled_idx=unl_idx, validation_idx=val_idx, test_idx=test_idx,
        x_labelled=prepare(train_set.images[lab_idx]),
        y_labelled=system_labels(labels[lab_idx], known),
        x_unlabelled=prepare(train_set.images[unl_idx]),
        x_validation=prepare(train_set.images[val_idx]),
        y_validation=system_labels(labels[val_idx], known),
        x_test=prepare(test_set.images),
        y_test=system_labels(test_set.labels, known),
        source_labels_unlabelled=labels[unl_idx],
        source_labels_test=np.asarray(test_set.labels),
    )


def write_split_manifest(path, split: SsLacSplit, extra=None):
    """Plain-text manifest: one ``key: values`` line per field."""
    lines = [f"seed: {split.seed}",
             f"k: {split.k}",
             "known_classes: " + " ".join(map(str, split.known_classes))]
    for key, val in (extra or {}).items():
        lines.append(f"{key}: {val}")
    for name in ("labelled", "validation", "unlabelled"):
        idx = getattr(split, f"{name}_idx")
        lines.append(f"{name}_size: {len(idx)}")
        lines.append(f"{name}_idx: " + " ".join(map(str, idx.tolist())))
    Path(path).write_text("\n".join(lines) + "\n")


def read_split_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, _, val = line.partition(":")
        val = val.strip()
        if key.endswith("_idx"):
            out[key] = np.array([int(v) for v in val.split()], dtype=np.int64)
        elif key == "known_classes":
            out[key] = tuple(int(v) for v in val.split())
        else:
            out[key] = val
    return out


def split_from_manifest(manifest: dict, train_set: ImageSet, test_set: ImageSet,
                        prepare=normalize) -> SsLacSplit:
    known = manifest["known_classes"]
    labels = np.asarray(train_set.labels)
    lab, unl, val = manifest["labelled_idx"], manifest["unlabelled_idx"], manifest["validation_idx"]
    return SsLacSplit(
        known_classes=known, seed=int(manifest["seed"]),
        labelled_idx=lab, unlabelled_idx=unl, validation_idx=val, test_idx=np.arange(len(test_set)),
        x_labelled=prepare(train_set.images[lab]), y_labelled=system_labels(labels[lab], known),
        x_unlabelled=prepare(train_set.images[unl]),
        x_validation=prepare(train_set.images[val]), y_validation=system_labels(labels[val], known),
        x_test=prepare(test_set.images), y_test=system_labels(test_set.labels, known),
        source_labels_unlabelled=labels[unl], source_labels_test=np.asarray(test_set.labels),
    )


# --------------------------------------------------------------------------- dummy domain

@dataclass(frozen=True)
class SyntheticDomain:
    blob_centers: np.ndarray       # (6, 2)
    blob_spreads: np.ndarray       # (6,)
    known_ids: tuple               # 3 blob indices
    split: SsLacSplit
    open_probe_points: np.ndarray  # (m, 2)
    test_blob_ids: np.ndarray = field(default=None)

    @property
    def k(self):
        return len(self.known_ids)


DUMMY_CENTERS = np.array([[-6.0, 4.0], [0.0, 4.0], [6.0, 4.0],
                          [-6.0, -4.0], [0.0, -4.0], [6.0, -4.0]])
DUMMY_SPREAD = 0.7


def _probe_points(centers, min_dist, bounds, rng, count):
    lo, hi = bounds
    pts = []
    while len(pts) < count:
        p = rng.uniform(lo, hi, size=(4 * count, 2))
        d = np.linalg.norm(p[:, None, :] - centers[None], axis=-1).min(axis=1)
        pts.extend(p[d >= min_dist])
    return np.array(pts[:count])


def make_dummy_domain(seed=0, samples_per_blob=200, known_ids=(0, 2, 4), n_probe=200,
                      bounds=(-14.0, 14.0)) -> SyntheticDomain:
    """Six isotropic 2-D blobs; three known, three novel.

    Known blobs contribute labelled, fair-validation and unlabelled samples; novel
    blobs contribute unlabelled samples only. Open probe points lie at least six
    spreads from every blob centre inside ``bounds``.
    """
    if samples_per_blob < 20:
        raise ValueError("samples_per_blob must be at least 20")
    rng = np.random.default_rng(seed)
    centers = DUMMY_CENTERS.copy()
    spreads = np.full(6, DUMMY_SPREAD)
    known_ids = tuple(known_ids)

    def draw(blob, n):
        return (centers[blob] + spreads[blob] * rng.standard_normal((n, 2))).astype(np.float32)

    n_val = max(1, samples_per_blob // 5)
    xl, yl, xv, yv, xu, su, xt, yt, tb = [], [], [], [], [], [], [], [], []
    for b in range(6):
        if b in known_ids:
            cls = known_ids.index(b) + 1
            xl.append(draw(b, samples_per_blob - n_val))
            yl.append(np.full(samples_per_blob - n_val, cls))
            xv.append(draw(b, n_val))
            yv.append(np.full(n_val, cls))
        else:
            cls = len(known_ids) + 1
        xu.append(draw(b, samples_per_blob))
        su.append(np.full(samples_per_blob, b))
        xt.append(draw(b, samples_per_blob))
        yt.append(np.full(samples_per_blob, cls))
        tb.append(np.full(samples_per_blob, b))
    probes = _probe_points(centers, 6 * spreads.max(), bounds, rng, n_probe).astype(np.float32)
    cat = np.concatenate
    split = SsLacSplit(
        known_classes=known_ids, seed=seed,
        labelled_idx=np.arange(sum(map(len, xl))), unlabelled_idx=np.arange(sum(map(len, xu))),
        validation_idx=np.arange(sum(map(len, xv))), test_idx=np.arange(sum(map(len, xt))),
        x_labelled=cat(xl), y_labelled=cat(yl).astype(np.int64),
        x_unlabelled=cat(xu), x_validation=cat(xv), y_validation=cat(yv).astype(np.int64),
        x_test=cat(xt), y_test=cat(yt).astype(np.int64),
        source_labels_unlabelled=cat(su), source_labels_test=cat(tb),
    )
    return SyntheticDomain(centers, spreads, known_ids, split, probes, test_blob_ids=cat(tb))
