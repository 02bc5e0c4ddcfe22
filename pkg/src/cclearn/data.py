"""Synthetic domain-shifted datasets, delimited-text tables, and batching.

The synthetic generator draws class means on a sphere and Gaussian samples
around them. The target domain is the *same* underlying draw pushed through
an affine map (x <- scale * R x + t, R a composition of seeded Givens
rotations) plus its own noise level, which mimics an acquisition-device /
population / site change with controllable severity. Identical seeds produce
bitwise-identical datasets, and a trivial map (R=I, t=0, scale=1, equal
noise) makes source and target bitwise equal.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import TableParseError

# fixed sub-stream tags so every random draw is attributable to the one seed
_STREAM_BASE = 11
_STREAM_AFFINE = 12
_STREAM_SPLIT = 14


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    domain: str
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError(f"features must be a non-empty 2-D array, got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must be one integer per row")
        if not np.isfinite(self.features).all():
            raise ValueError("features contain non-finite values")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError(
                f"labels must lie in [0, {self.num_classes}), got "
                f"[{self.labels.min()}, {self.labels.max()}]"
            )

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]


@dataclass
class SynthConfig:
    """Knobs for the blob generator; defaults are the desk-scale benchmark."""

    num_classes: int = 4
    input_dim: int = 16
    samples_per_class: int | tuple[int, ...] = 200
    spread: float = 16.0
    class_std: float = 2.5
    rotation_angle: float | tuple[float, ...] = 0.35
    translation: float | tuple[float, ...] = 3.0
    scale: float = 1.2
    source_noise_std: float = 0.0
    target_noise_std: float = 1.5
    seed: int = 0

    def class_counts(self) -> tuple[int, ...]:
        if isinstance(self.samples_per_class, (int, np.integer)):
            return (int(self.samples_per_class),) * self.num_classes
        counts = tuple(int(c) for c in self.samples_per_class)
        if len(counts) != self.num_classes:
            raise ValueError(
                f"samples_per_class has {len(counts)} entries for {self.num_classes} classes"
            )
        return counts

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if any(c < 1 for c in self.class_counts()):
            raise ValueError("every per-class sample count must be >= 1")
        if self.spread <= 0:
            raise ValueError(f"spread must be > 0, got {self.spread}")
        if self.class_std < 0 or self.source_noise_std < 0 or self.target_noise_std < 0:
            raise ValueError("standard deviations must be >= 0")
        if self.scale <= 0:
            raise ValueError(f"scale must be > 0, got {self.scale}")


def rotation_matrix(dim: int, angles: float | Sequence[float], seed_key: Sequence[int]) -> np.ndarray:
    """Orthogonal matrix from Givens rotations on seeded disjoint axis pairs.

    ``angles`` is one angle shared by all floor(dim/2) planes or one angle per
    plane. Angle 0 yields the exact identity.
    """
    rng = np.random.default_rng(list(seed_key))
    perm = rng.permutation(dim)
    n_planes = dim // 2
    if np.isscalar(angles):
        plane_angles = [float(angles)] * n_planes
    else:
        plane_angles = [float(a) for a in angles]
        if len(plane_angles) != n_planes:
            raise ValueError(
                f"need {n_planes} rotation angles for dim {dim}, got {len(plane_angles)}"
            )
    rot = np.eye(dim)
    for p in range(n_planes):
        i, j = int(perm[2 * p]), int(perm[2 * p + 1])
        theta = plane_angles[p]
        c, s = math.cos(theta), math.sin(theta)
        givens = np.eye(dim)
        givens[i, i] = c
        givens[j, j] = c
        givens[i, j] = -s
        givens[j, i] = s
        rot = givens @ rot
    return rot


def _translation_vector(config: SynthConfig) -> np.ndarray:
    if np.isscalar(config.translation):
        if float(config.translation) == 0.0:
            return np.zeros(config.input_dim)
        rng = np.random.default_rng([config.seed, _STREAM_AFFINE, 1])
        direction = rng.standard_normal(config.input_dim)
        direction /= np.linalg.norm(direction)
        return float(config.translation) * direction
    vec = np.asarray(config.translation, dtype=np.float64)
    if vec.shape != (config.input_dim,):
        raise ValueError(f"translation vector shape {vec.shape} != ({config.input_dim},)")
    return vec


def generate_blobs(config: SynthConfig, domain: str) -> Dataset:
    """Seeded Gaussian blobs; ``domain`` is "source" or "target".

    Both domains share every random draw, so the only differences are the
    affine map and the per-domain noise level.
    """
    config.validate()
    if domain not in ("source", "target"):
        raise ValueError(f"domain must be 'source' or 'target', got {domain!r}")
    counts = config.class_counts()
    total = sum(counts)
    rng = np.random.default_rng([config.seed, _STREAM_BASE])
    mean_dirs = rng.standard_normal((config.num_classes, config.input_dim))
    mean_dirs /= np.linalg.norm(mean_dirs, axis=1, keepdims=True)
    means = config.spread * mean_dirs
    deviations = rng.standard_normal((total, config.input_dim))
    noise = rng.standard_normal((total, config.input_dim))

    labels = np.repeat(np.arange(config.num_classes), counts)
    x = means[labels] + config.class_std * deviations
    if domain == "source":
        x = x + config.source_noise_std * noise
    else:
        rot = rotation_matrix(
            config.input_dim, config.rotation_angle, [config.seed, _STREAM_AFFINE, 0]
        )
        x = config.scale * (x @ rot.T) + _translation_vector(config)
        x = x + config.target_noise_std * noise
    return Dataset(x, labels, domain, config.num_classes)


def make_batches(
    ds: Dataset, batch_size: int, seed: int | Sequence[int] = 0, shuffle: bool = False
) -> list[np.ndarray]:
    """Partition [0, N) into consecutive index chunks of ``batch_size``.

    With ``shuffle`` a seeded permutation is applied first; the last chunk may
    be smaller. Deterministic under the seed.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    n = len(ds)
    indices = np.arange(n)
    if shuffle:
        indices = np.random.default_rng(seed).permutation(n)
    return [indices[i : i + batch_size] for i in range(0, n, batch_size)]


def split_dataset(
    ds: Dataset, fractions: tuple[float, ...] = (0.7, 0.1, 0.2), seed: int = 0
) -> tuple[Dataset, ...]:
    """Seeded random split; first parts get floor(fraction*N), the last the rest."""
    fracs = [float(f) for f in fractions]
    if any(f < 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be >= 0 and sum to 1, got {fractions}")
    n = len(ds)
    perm = np.random.default_rng([seed, _STREAM_SPLIT]).permutation(n)
    sizes = [int(f * n) for f in fracs[:-1]]
    sizes.append(n - sum(sizes))
    if any(s < 1 for s in sizes):
        raise ValueError(f"split sizes {sizes} leave an empty part for N={n}")
    parts = []
    start = 0
    for size in sizes:
        idx = np.sort(perm[start : start + size])
        parts.append(Dataset(ds.features[idx], ds.labels[idx], ds.domain, ds.num_classes))
        start += size
    return tuple(parts)


def save_table(ds: Dataset, path) -> None:
    """Write the documented CSV schema: header f0..f{D-1},label,domain."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(ds.input_dim)] + ["label", "domain"])
        for row, label in zip(ds.features, ds.labels):
            writer.writerow([f"{v:.17g}" for v in row] + [str(int(label)), ds.domain])


def load_table(path, num_classes: int | None = None) -> Dataset:
    """Parse the documented CSV schema back into a Dataset.

    Feature columns must be named f0..f{D-1} in order, followed by ``label``
    and ``domain``. When ``num_classes`` is given labels are range-checked
    against it; otherwise the class count is inferred as max(label)+1. Parse
    failures name the 1-based line number.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableParseError(f"{path}: empty file") from None
        if len(header) < 3 or header[-2:] != ["label", "domain"]:
            raise TableParseError(
                f"{path}: line 1: header must end with 'label,domain', got {header}"
            )
        dim = len(header) - 2
        expected = [f"f{i}" for i in range(dim)]
        if header[:dim] != expected:
            raise TableParseError(
                f"{path}: line 1: feature columns must be f0..f{dim - 1} in order"
            )
        rows, labels, domain = [], [], None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 2:
                raise TableParseError(
                    f"{path}: line {lineno}: expected {dim + 2} fields, got {len(row)}"
                )
            try:
                values = [float(v) for v in row[:dim]]
            except ValueError:
                raise TableParseError(
                    f"{path}: line {lineno}: non-numeric feature value"
                ) from None
            if not all(math.isfinite(v) for v in values):
                raise TableParseError(f"{path}: line {lineno}: non-finite feature value")
            try:
                label = int(row[dim])
            except ValueError:
                raise TableParseError(
                    f"{path}: line {lineno}: label {row[dim]!r} is not an integer"
                ) from None
            if label < 0 or (num_classes is not None and label >= num_classes):
                bound = num_classes if num_classes is not None else "inf"
                raise TableParseError(
                    f"{path}: line {lineno}: label {label} out of range [0, {bound})"
                )
            if domain is None:
                domain = row[dim + 1]
            elif row[dim + 1] != domain:
                raise TableParseError(
                    f"{path}: line {lineno}: mixed domain tags ({row[dim + 1]!r} vs {domain!r})"
                )
            rows.append(values)
            labels.append(label)
    if not rows:
        raise TableParseError(f"{path}: no samples")
    labels_arr = np.array(labels, dtype=np.int64)
    k = num_classes if num_classes is not None else int(labels_arr.max()) + 1
    return Dataset(np.array(rows, dtype=np.float64), labels_arr, domain, k)
