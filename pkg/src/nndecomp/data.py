"""Datasets: CSV ingestion, synthetic blob generation, deterministic splits.

The blob generator supports engineered redundancy: the last `redundancy`
coordinates are exact copies of the first ones, so a structured 50%
reduction of a model trained on them is known to be feasible.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64
    class_count: int
    name: str = ""

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64, order="C")
        labels = np.array(self.labels, dtype=np.int64)
        if feats.ndim != 2 or len(feats) == 0:
            raise ValidationError("features must be a non-empty (n, d) array")
        if labels.shape != (len(feats),):
            raise ValidationError("labels must align with features")
        if not np.all(np.isfinite(feats)):
            raise ValidationError("features contain non-finite entries")
        if self.class_count < 2:
            raise ValidationError("class_count must be at least 2")
        if labels.min() < 0 or labels.max() >= self.class_count:
            bad = int(np.argmax((labels < 0) | (labels >= self.class_count)))
            raise ValidationError(
                f"label {labels[bad]} at row {bad} outside [0, {self.class_count})"
            )
        feats.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.features)

    @property
    def dim(self):
        return self.features.shape[1]


def load_csv(path, class_count, name=None):
    """Parse a headerless CSV whose final column is the integer label."""
    features, labels = [], []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
                if width < 2:
                    raise ValidationError(f"line {lineno}: need features and a label")
            elif len(cells) != width:
                raise ValidationError(
                    f"line {lineno}: expected {width} columns, got {len(cells)}"
                )
            try:
                features.append([float(c) for c in cells[:-1]])
                labels.append(int(cells[-1]))
            except ValueError as exc:
                raise ValidationError(f"line {lineno}: {exc}") from exc
    if not features:
        raise ValidationError(f"{path}: no data rows")
    return Dataset(
        np.array(features, dtype=np.float64),
        np.array(labels, dtype=np.int64),
        class_count=class_count,
        name=name or str(path),
    )


def save_csv(dataset, path):
    """Write features (repr round-trip exact) plus the label column."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row, label in zip(dataset.features, dataset.labels):
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write(f",{label}\n")


def _fill_redundant(arr, redundancy):
    # Sequential copy keeps the rule well-defined even when the duplicated
    # block overlaps its source.
    free = arr.shape[1] - redundancy
    for i in range(redundancy):
        arr[:, free + i] = arr[:, i]
    return arr


def gen_blobs(class_count, dim, per_class, separation, redundancy=0, seed=0, name=None):
    """Gaussian clusters with unit covariance and duplicated trailing columns.

    Centers are seeded random directions rescaled so the closest pair sits
    exactly `separation` apart (in the full, redundancy-included space).
    """
    if class_count < 2:
        raise ValidationError("class_count must be at least 2")
    if dim < 1 or not 0 <= redundancy < dim:
        raise ValidationError("need dim >= 1 and 0 <= redundancy < dim")
    if per_class < 1 or separation <= 0:
        raise ValidationError("per_class must be >= 1 and separation positive")

    free = dim - redundancy
    rng = np.random.default_rng(seed)
    centers = np.zeros((class_count, dim))
    centers[:, :free] = rng.standard_normal((class_count, free))
    _fill_redundant(centers, redundancy)

    dists = [
        np.linalg.norm(centers[i] - centers[j])
        for i in range(class_count)
        for j in range(i + 1, class_count)
    ]
    closest = min(dists)
    if closest == 0.0:
        raise ValidationError("degenerate center draw; use another seed")
    centers *= separation / closest

    features = np.zeros((class_count * per_class, dim))
    labels = np.repeat(np.arange(class_count, dtype=np.int64), per_class)
    for k in range(class_count):
        block = features[k * per_class : (k + 1) * per_class]
        block[:, :free] = centers[k, :free] + rng.standard_normal((per_class, free))
        _fill_redundant(block, redundancy)

    return Dataset(
        features,
        labels,
        class_count=class_count,
        name=name or f"blobs-c{class_count}-d{dim}-r{redundancy}",
    )


def split(dataset, fraction, seed=0):
    """Disjoint, exhaustive, seeded split with sizes (ceil(f*n), rest)."""
    if not 0.0 < fraction < 1.0:
        raise ValidationError("fraction must lie strictly between 0 and 1")
    n = len(dataset)
    order = np.random.default_rng(seed).permutation(n)
    cut = int(np.ceil(fraction * n))
    first, second = order[:cut], order[cut:]
    if len(second) == 0:
        raise ValidationError("fraction leaves the second part empty")
    make = lambda idx, tag: Dataset(
        dataset.features[idx],
        dataset.labels[idx],
        class_count=dataset.class_count,
        name=f"{dataset.name}-{tag}",
    )
    return make(first, "a"), make(second, "b")
