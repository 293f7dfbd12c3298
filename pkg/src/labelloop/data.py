"""Dataset generation, CSV/IDX loading, and stratified splitting.

Sample ids are row/record indices assigned at load time and stay stable under
reload; they are the join key across pools, score dumps, and reports.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

UNLABELED = -1


@dataclass
class Dataset:
    ids: np.ndarray  # (n,) int64, globally stable
    x: np.ndarray  # (n, d) float64
    y: np.ndarray  # (n,) int64; UNLABELED where unknown
    n_classes: int
    image_shape: tuple[int, int] | None = None

    @property
    def n(self) -> int:
        return int(self.ids.shape[0])

    @property
    def dim(self) -> int:
        return int(self.x.shape[1])

    def subset(self, ids: np.ndarray) -> "Dataset":
        """Rows for the given ids, in the given order."""
        lookup = {int(i): k for k, i in enumerate(self.ids)}
        rows = np.array([lookup[int(i)] for i in ids], dtype=np.int64)
        return Dataset(
            ids=self.ids[rows],
            x=self.x[rows],
            y=self.y[rows],
            n_classes=self.n_classes,
            image_shape=self.image_shape,
        )

    def row_of(self, sample_id: int) -> int:
        pos = np.flatnonzero(self.ids == sample_id)
        if pos.size == 0:
            raise KeyError(f"unknown sample id {sample_id}")
        return int(pos[0])

    def truth(self) -> dict[int, int]:
        return {int(i): int(c) for i, c in zip(self.ids, self.y) if c != UNLABELED}


@dataclass
class DatasetSpec:
    kind: str = "gaussians"  # gaussians | moons | rings
    n: int = 3000
    n_classes: int = 3
    class_ratio: tuple[float, ...] | None = None  # e.g. (8.7, 1.0)
    dim: int = 2
    noise_sigma: float = 1.0
    seed: int = 0
    splits: tuple[float, float, float] = (0.70, 0.15, 0.15)

    def validate(self) -> None:
        if self.kind not in ("gaussians", "moons", "rings"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.kind == "moons" and self.n_classes != 2:
            raise ValueError("moons is a 2-class shape")
        if self.n < self.n_classes:
            raise ValueError("fewer samples than classes")
        if self.dim < 2:
            raise ValueError("feature dimension must be >= 2")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.class_ratio is not None:
            if len(self.class_ratio) != self.n_classes:
                raise ValueError("class_ratio length must equal n_classes")
            if any(r <= 0 for r in self.class_ratio):
                raise ValueError("class_ratio entries must be > 0")
        if abs(sum(self.splits) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if any(f < 0 for f in self.splits):
            raise ValueError("split fractions must be >= 0")


def class_counts(n: int, ratio: tuple[float, ...]) -> list[int]:
    """Largest-remainder allocation of n samples to the given ratio."""
    total = sum(ratio)
    ideal = [n * r / total for r in ratio]
    counts = [int(np.floor(v)) for v in ideal]
    remainders = [v - c for v, c in zip(ideal, counts)]
    leftover = n - sum(counts)
    order = sorted(range(len(ratio)), key=lambda i: (-remainders[i], i))
    for i in order[:leftover]:
        counts[i] += 1
    if any(c == 0 for c in counts):
        raise ValueError("class_ratio leaves a class empty at this n")
    return counts


def gen_synthetic(spec: DatasetSpec) -> Dataset:
    """Deterministic labeled synthetic dataset."""
    spec.validate()
    ratio = spec.class_ratio or tuple([1.0] * spec.n_classes)
    counts = class_counts(spec.n, ratio)
    rng = np.random.default_rng(spec.seed)
    xs, ys = [], []
    for c, count in enumerate(counts):
        centers = _pad_dims(_class_center(spec.kind, c, spec.n_classes, count, rng),
                            spec.dim)
        noise = spec.noise_sigma * rng.standard_normal((count, spec.dim))
        xs.append(centers + noise)
        ys.append(np.full(count, c, dtype=np.int64))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    perm = rng.permutation(x.shape[0])
    return Dataset(
        ids=np.arange(x.shape[0], dtype=np.int64),
        x=x[perm],
        y=y[perm],
        n_classes=spec.n_classes,
    )


def _class_center(
    kind: str, c: int, n_classes: int, count: int, rng: np.random.Generator
) -> np.ndarray:
    if kind == "gaussians":
        # class means on a circle of radius 3 in the first two feature dims
        theta = 2.0 * np.pi * c / n_classes
        mean = np.array([3.0 * np.cos(theta), 3.0 * np.sin(theta)])
        out = np.tile(mean, (count, 1))
    elif kind == "moons":
        t = rng.uniform(0.0, np.pi, size=count)
        if c == 0:
            out = np.stack([np.cos(t), np.sin(t)], axis=1)
        else:
            out = np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1)
    else:  # rings
        t = rng.uniform(0.0, 2.0 * np.pi, size=count)
        radius = 1.5 * (c + 1)
        out = radius * np.stack([np.cos(t), np.sin(t)], axis=1)
    return out


def _pad_dims(x: np.ndarray, dim: int) -> np.ndarray:
    if x.shape[1] == dim:
        return x
    return np.concatenate([x, np.zeros((x.shape[0], dim - x.shape[1]))], axis=1)


def split_dataset(
    dataset: Dataset, fractions: tuple[float, float, float], seed: int
) -> tuple[Dataset, Dataset, Dataset]:
    """Stratified train/val/test split; unlabeled rows always go to train.

    Per class, ideal counts get floored and the leftover slots go to the
    splits with the largest fractional remainder, ties broken toward the
    split with the largest remaining global deficit, then by split order.
    Errors out if any class misses a split with a positive fraction.
    """
    if abs(sum(fractions) - 1.0) > 1e-9 or any(f < 0 for f in fractions):
        raise ValueError("fractions must be nonnegative and sum to 1")
    rng = np.random.default_rng(seed)
    labeled_mask = dataset.y != UNLABELED
    n_labeled = int(np.sum(labeled_mask))
    targets = [fractions[s] * n_labeled for s in range(3)]
    assigned = [0.0, 0.0, 0.0]
    buckets: list[list[int]] = [[], [], []]
    buckets[0].extend(dataset.ids[~labeled_mask].tolist())

    for c in range(dataset.n_classes):
        ids_c = dataset.ids[(dataset.y == c) & labeled_mask]
        if ids_c.size == 0:
            raise ValueError(f"class {c} has no samples")
        ids_c = ids_c[rng.permutation(ids_c.size)]
        ideal = [fractions[s] * ids_c.size for s in range(3)]
        counts = [int(np.floor(v)) for v in ideal]
        leftover = ids_c.size - sum(counts)
        rema = [v - k for v, k in zip(ideal, counts)]
        for _ in range(leftover):
            deficit = [targets[s] - assigned[s] - counts[s] for s in range(3)]
            pick = max(range(3), key=lambda s: (rema[s], deficit[s], -s))
            counts[pick] += 1
            rema[pick] = -1.0  # a split gets at most one leftover per class
        for s in range(3):
            if fractions[s] > 0 and counts[s] == 0:
                raise ValueError(
                    f"class {c} too small to appear in split {s} "
                    f"(fraction {fractions[s]})"
                )
        pos = 0
        for s in range(3):
            buckets[s].extend(int(i) for i in ids_c[pos : pos + counts[s]])
            assigned[s] += counts[s]
            pos += counts[s]

    parts = []
    for s in range(3):
        ids = np.array(sorted(buckets[s]), dtype=np.int64)
        parts.append(dataset.subset(ids))
    return parts[0], parts[1], parts[2]


# --- CSV -------------------------------------------------------------------

def save_csv(dataset: Dataset, path: str) -> None:
    """Header f0..f{d-1},label; unlabeled rows leave the label cell empty."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"f{i}" for i in range(dataset.dim)] + ["label"])
        for row, label in zip(dataset.x, dataset.y):
            cells = [repr(float(v)) for v in row]
            cells.append("" if label == UNLABELED else str(int(label)))
            writer.writerow(cells)


def load_csv(path: str, n_classes: int | None = None) -> Dataset:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("malformed header: empty file") from None
        if len(header) < 2 or header[-1].strip().lower() != "label":
            raise ValueError("malformed header: last column must be 'label'")
        width = len(header)
        xs, ys = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ValueError(f"truncated record at line {lineno}")
            try:
                xs.append([float(v) for v in row[:-1]])
            except ValueError:
                raise ValueError(f"non-numeric feature at line {lineno}") from None
            cell = row[-1].strip()
            if cell == "":
                ys.append(UNLABELED)
            else:
                try:
                    label = int(cell)
                except ValueError:
                    raise ValueError(f"label out of range at line {lineno}") from None
                if label < 0 or (n_classes is not None and label >= n_classes):
                    raise ValueError(f"label out of range at line {lineno}")
                ys.append(label)
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.int64)
    if x.size == 0:
        raise ValueError("dataset has no rows")
    inferred = int(y.max()) + 1 if np.any(y >= 0) else 0
    return Dataset(
        ids=np.arange(x.shape[0], dtype=np.int64),
        x=x,
        y=y,
        n_classes=n_classes if n_classes is not None else max(inferred, 2),
    )


# --- IDX -------------------------------------------------------------------

def load_idx(images_path: str, labels_path: str | None = None) -> Dataset:
    """Big-endian IDX image (+ optional label) files; pixels scaled to [0,1]."""
    with open(images_path, "rb") as f:
        blob = f.read()
    if len(blob) < 16:
        raise ValueError("malformed header: image file too short")
    magic, count, rows, cols = struct.unpack_from(">IIII", blob, 0)
    if magic != IDX_IMAGES_MAGIC:
        raise ValueError(f"format error: bad image magic 0x{magic:08x}")
    expected = 16 + count * rows * cols
    if len(blob) < expected:
        raise ValueError("truncated records in image file")
    pixels = np.frombuffer(blob, dtype=np.uint8, count=count * rows * cols, offset=16)
    x = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0

    if labels_path is None:
        y = np.full(count, UNLABELED, dtype=np.int64)
        n_classes = 2
    else:
        with open(labels_path, "rb") as f:
            lblob = f.read()
        if len(lblob) < 8:
            raise ValueError("malformed header: label file too short")
        lmagic, lcount = struct.unpack_from(">II", lblob, 0)
        if lmagic != IDX_LABELS_MAGIC:
            raise ValueError(f"format error: bad label magic 0x{lmagic:08x}")
        if lcount != count:
            raise ValueError("label count does not match image count")
        if len(lblob) < 8 + count:
            raise ValueError("truncated records in label file")
        y = np.frombuffer(lblob, dtype=np.uint8, count=count, offset=8).astype(np.int64)
        n_classes = int(y.max()) + 1 if count else 2
    return Dataset(
        ids=np.arange(count, dtype=np.int64),
        x=x,
        y=y,
        n_classes=max(n_classes, 2),
        image_shape=(rows, cols),
    )
