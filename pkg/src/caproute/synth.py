"""Planted-model prediction-vector datasets.

Each class y owns a unit target direction t_y and a part profile a_y over the
lower capsules. An example of class y puts beta * a_y[i] * (1 + jitter_i) * t_y
in column y of the prediction tensor and nothing in the other columns; every
entry then gets isotropic Gaussian noise of per-vector scale sigma.

Random streams are derived from one seed with ``numpy.random.SeedSequence``
spawn keys (PCG64), one per purpose and one per example, so growing a split
never changes earlier draws.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from caproute.errors import DimensionError, ValidationError

_TARGETS, _PROFILES, _EXAMPLES = 0, 1, 2
_SPLITS = {"train": 0, "test": 1}


@dataclass(frozen=True)
class PlantedSpec:
    classes: int = 10
    n_lower: int = 64
    dim: int = 16
    active_fraction: float = 0.25
    overlap: float = 0.0
    beta: float = 1.0
    noise: float = 0.1
    per_class_train: int = 100
    per_class_test: int = 100
    jitter: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.classes < 1 or self.n_lower < 1 or self.dim < 1:
            raise ValidationError("classes, n_lower and dim must all be >= 1")
        if not 0 < self.active_fraction <= 1:
            raise ValidationError("active_fraction must lie in (0, 1]")
        if round(self.active_fraction * self.n_lower) < 1:
            raise ValidationError("active_fraction * n_lower rounds to zero active parts")
        if not 0 <= self.overlap < 1:
            raise ValidationError("overlap must lie in [0, 1)")
        if not self.beta > 0:
            raise ValidationError("beta must be positive")
        if self.noise < 0:
            raise ValidationError("noise must be non-negative")
        if self.per_class_train < 1 or self.per_class_test < 0:
            raise ValidationError("need per_class_train >= 1 and per_class_test >= 0")
        if not 0 <= self.jitter < 1:
            raise ValidationError("jitter must lie in [0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        if self.classes > self.dim:
            warnings.warn(f"{self.classes} classes in {self.dim} dims: targets cannot be orthogonal")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LabeledDataset:
    """Prediction tensors (M, N_i, N_j, d_h) with integer labels (M,)."""

    predictions: np.ndarray
    labels: np.ndarray
    n_classes: int | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.predictions = np.asarray(self.predictions, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.predictions.ndim != 4 or min(self.predictions.shape[1:], default=0) < 1:
            raise DimensionError(f"predictions must be (M, N_i, N_j, d_h), got {self.predictions.shape}")
        if self.labels.shape != (self.predictions.shape[0],):
            raise DimensionError("one label per example required")
        if self.n_classes is None:
            self.n_classes = self.predictions.shape[2]
        if self.n_classes > self.predictions.shape[2]:
            raise DimensionError("more classes than upper capsules")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValidationError(f"labels must lie in [0, {self.n_classes})")
        if not np.all(np.isfinite(self.predictions)):
            raise ValidationError("predictions contain non-finite entries")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        _, n_i, n_j, d = self.predictions.shape
        return n_i, n_j, d

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.predictions[idx], self.labels[idx], self.n_classes, dict(self.provenance))


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def planted_structure(spec: PlantedSpec) -> tuple[np.ndarray, np.ndarray]:
    """Class targets (K, d_h) and part profiles (K, N_i)."""
    rng = _rng(spec.seed, _TARGETS)
    targets = rng.standard_normal((spec.classes, spec.dim))
    targets /= np.linalg.norm(targets, axis=1, keepdims=True)

    rng = _rng(spec.seed, _PROFILES)
    n_active = int(round(spec.active_fraction * spec.n_lower))
    sets = []
    for k in range(spec.classes):
        active = rng.choice(spec.n_lower, size=n_active, replace=False)
        if k >= 1 and spec.overlap > 0:
            prev = sets[k - 1]
            n_shared = int(round(spec.overlap * n_active))
            # borrow parts of the previous class that this one does not have yet
            donors = rng.permutation(np.setdiff1d(prev, active))
            own = rng.permutation(np.setdiff1d(active, prev))
            n_swap = min(n_shared - np.intersect1d(prev, active).size, donors.size, own.size)
            if n_swap > 0:
                keep = np.setdiff1d(active, own[:n_swap])
                active = np.concatenate([keep, donors[:n_swap]])
        sets.append(np.sort(active))

    profiles = np.zeros((spec.classes, spec.n_lower))
    for k, active in enumerate(sets):
        profiles[k, active] = rng.uniform(0.5, 1.0, size=active.size)
    return targets, profiles


def _make_split(spec, targets, profiles, split: str, per_class: int) -> LabeledDataset:
    k_, n_i, d = spec.classes, spec.n_lower, spec.dim
    m = per_class * k_
    preds = np.zeros((m, n_i, k_, d))
    labels = np.zeros(m, dtype=np.int64)
    # examples are interleaved by class: 0, 1, ..., K-1, 0, 1, ...
    for idx in range(per_class):
        for y in range(k_):
            e = idx * k_ + y
            rng = _rng(spec.seed, _EXAMPLES, _SPLITS[split], y, idx)
            jitter = rng.uniform(-spec.jitter, spec.jitter, size=n_i) if spec.jitter > 0 else np.zeros(n_i)
            noise = rng.standard_normal((n_i, k_, d)) * (spec.noise / np.sqrt(d))
            preds[e] = noise
            preds[e, :, y, :] += spec.beta * (profiles[y] * (1.0 + jitter))[:, None] * targets[y]
            labels[e] = y
    provenance = {"source": "planted", "split": split, "spec": spec.to_dict()}
    return LabeledDataset(preds, labels, k_, provenance)


def generate_planted(spec: PlantedSpec) -> tuple[LabeledDataset, LabeledDataset]:
    targets, profiles = planted_structure(spec)
    train = _make_split(spec, targets, profiles, "train", spec.per_class_train)
    test = _make_split(spec, targets, profiles, "test", spec.per_class_test)
    return train, test


def dataset_digest(d: LabeledDataset) -> str:
    """SHA-256 over dims, class count, labels and float64 values in (e, i, j, k) order."""
    h = hashlib.sha256()
    m = len(d)
    h.update(np.array([*d.dims], dtype="<u4").tobytes())
    h.update(np.array([m, d.n_classes], dtype="<u8").tobytes())
    h.update(np.ascontiguousarray(d.labels, dtype="<u4").tobytes())
    h.update(np.ascontiguousarray(d.predictions, dtype="<f8").tobytes())
    return h.hexdigest()
