"""Offline construction of master routing coefficients.

Pipeline: route every training example, keep its last-iteration coefficient
matrix, optionally filter outliers per class, sum full matrices into one
container per class, average by class count, normalise each row over the
upper capsules, then copy column k of container k into the master.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2

from caproute.analysis import gt_columns, standardize_rows
from caproute.errors import DimensionError, MissingClassError, ValidationError
from caproute.routing import NormKind, RoutingConfig, dynamic_route, normalize_rows
from caproute.synth import LabeledDataset, dataset_digest


@dataclass(frozen=True)
class FilterSpec:
    """Per-class example filter: "none", "kmeans" or "similarity".

    ``fraction`` is the drop fraction for k-means and the keep fraction for
    similarity ranking.
    """

    kind: str = "none"
    fraction: float = 1.0
    k: int = 1
    seed: int | None = None
    max_iter: int = 50

    def __post_init__(self):
        if self.kind not in ("none", "kmeans", "similarity"):
            raise ValidationError(f"unknown filter kind {self.kind!r}")
        if not 0 < self.fraction <= 1:
            raise ValidationError("filter fraction must lie in (0, 1]")
        if self.k < 1:
            raise ValidationError("k-means needs k >= 1")
        if self.kind == "kmeans" and self.seed is None:
            raise ValidationError("k-means filtering requires an explicit seed")

    @classmethod
    def kmeans(cls, drop_fraction: float = 0.1, k: int = 1, seed: int | None = None) -> "FilterSpec":
        return cls("kmeans", drop_fraction, k, seed)

    @classmethod
    def similarity(cls, keep_fraction: float = 0.9) -> "FilterSpec":
        return cls("similarity", keep_fraction)

    @classmethod
    def parse(cls, text: str, seed: int | None = None) -> "FilterSpec":
        """Parse ``none``, ``kmeans:<drop>`` or ``sim:<keep>``."""
        name, _, arg = text.partition(":")
        try:
            if name == "none" and not arg:
                return cls()
            if name == "kmeans":
                return cls.kmeans(float(arg) if arg else 0.1, seed=seed)
            if name == "sim":
                return cls.similarity(float(arg) if arg else 0.9)
        except ValueError as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"bad filter argument in {text!r}") from exc
        raise ValidationError(f"unknown filter {text!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "fraction": self.fraction, "k": self.k, "seed": self.seed, "max_iter": self.max_iter}


@dataclass(frozen=True)
class BuilderConfig:
    norm: NormKind = NormKind.MAXMIN
    lower: float = 0.0
    upper: float = 1.0
    filter: FilterSpec = field(default_factory=FilterSpec)
    # which routing iteration to harvest; -1 is the last one
    iteration: int = -1
    epsilon: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "norm", NormKind(self.norm))
        if not self.lower < self.upper:
            raise ValidationError(f"need lower < upper, got p={self.lower}, q={self.upper}")

    @property
    def neutral(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def to_dict(self) -> dict:
        return {
            "norm": self.norm.value,
            "lower": self.lower,
            "upper": self.upper,
            "filter": self.filter.to_dict(),
            "iteration": self.iteration,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BuilderConfig":
        d = dict(d)
        d["filter"] = FilterSpec(**d.get("filter", {}))
        return cls(**d)


@dataclass
class ClassContainers:
    matrices: np.ndarray  # (K, N_i, N_j)
    class_counts: np.ndarray  # (K,)

    @property
    def n_classes(self) -> int:
        return self.matrices.shape[0]


@dataclass
class MasterMatrix:
    values: np.ndarray
    build_config: BuilderConfig = field(default_factory=BuilderConfig)
    class_counts: tuple[int, ...] = ()
    source_digest: str = ""
    routing_config: RoutingConfig | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionError(f"master must be a matrix, got shape {self.values.shape}")
        self.class_counts = tuple(int(c) for c in self.class_counts)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def metadata(self) -> dict:
        return {
            "build_config": self.build_config.to_dict(),
            "class_counts": list(self.class_counts),
            "source_digest": self.source_digest,
            "routing_config": self.routing_config.to_dict() if self.routing_config else None,
        }

    @classmethod
    def from_metadata(cls, values: np.ndarray, meta: dict) -> "MasterMatrix":
        rc = meta.get("routing_config")
        return cls(
            values=values,
            build_config=BuilderConfig.from_dict(meta.get("build_config", {})),
            class_counts=tuple(meta.get("class_counts", ())),
            source_digest=meta.get("source_digest", ""),
            routing_config=RoutingConfig.from_dict(rc) if rc else None,
        )


def accumulate_containers(coefficients, labels, n_classes: int) -> ClassContainers:
    """Sum each example's full N_i x N_j matrix into its class container.

    Summation runs in ascending example index so the result is reproducible
    bit for bit.
    """
    coefficients = np.asarray(coefficients, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if coefficients.ndim != 3 or labels.shape != (coefficients.shape[0],):
        raise DimensionError("expected (M, N_i, N_j) coefficients with one label each")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValidationError(f"labels must lie in [0, {n_classes})")
    containers = np.zeros((n_classes,) + coefficients.shape[1:])
    counts = np.zeros(n_classes, dtype=np.int64)
    for m, y in zip(coefficients, labels):
        containers[y] += m
        counts[y] += 1
    return ClassContainers(containers, counts)


def finalize_containers(c: ClassContainers, config: BuilderConfig) -> ClassContainers:
    """Average by class frequency, then normalise every row over the upper capsules."""
    for k, n in enumerate(c.class_counts):
        if n == 0:
            raise MissingClassError(k)
    averaged = c.matrices / c.class_counts[:, None, None]
    return ClassContainers(normalize_rows(averaged, config), c.class_counts.copy())


def reduce_to_master(c: ClassContainers, config: BuilderConfig | None = None) -> np.ndarray:
    """Column k of the master is column k of container k.

    Columns with no class behind them get the neutral value (p+q)/2.
    """
    config = config or BuilderConfig()
    k_, n_i, n_j = c.matrices.shape
    if k_ > n_j:
        raise DimensionError(f"{k_} classes but only {n_j} upper capsules")
    master = np.full((n_i, n_j), config.neutral)
    for k in range(k_):
        master[:, k] = c.matrices[k, :, k]
    return master


def _fraction_count(fraction: float, n: int) -> int:
    return int(np.floor(fraction * n + 0.5))


def filter_examples(gt_columns, labels, n_classes: int, spec: FilterSpec | None = None) -> np.ndarray:
    """Indices (ascending) of the examples that survive the filter."""
    spec = spec or FilterSpec()
    gt_columns = np.asarray(gt_columns, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if spec.kind == "none":
        return np.arange(labels.size)

    rng = np.random.default_rng(spec.seed) if spec.kind == "kmeans" else None
    kept = []
    for k in range(n_classes):
        idx = np.flatnonzero(labels == k)
        if idx.size == 0:
            raise MissingClassError(k)
        cols = gt_columns[idx]
        if spec.kind == "similarity":
            n_keep = _fraction_count(spec.fraction, idx.size)
            if n_keep < 1:
                raise ValidationError(f"similarity filter would empty class {k}")
            if idx.size == 1:
                kept.append(idx)
                continue
            z = standardize_rows(cols)
            r = np.clip(z @ z.T, -1.0, 1.0)
            score = (r.sum(axis=1) - np.diag(r)) / (idx.size - 1)
            order = np.lexsort((idx, -score))
            kept.append(np.sort(idx[order[:n_keep]]))
        else:
            n_drop = _fraction_count(spec.fraction, idx.size)
            if n_drop >= idx.size:
                raise ValidationError(f"k-means filter would empty class {k}")
            n_clusters = min(spec.k, idx.size)
            if n_clusters == 1:
                centroids, assign = cols.mean(axis=0, keepdims=True), np.zeros(idx.size, dtype=int)
            else:
                centroids, assign = kmeans2(cols, n_clusters, iter=spec.max_iter, minit="++", seed=rng)
            dist = np.linalg.norm(cols - centroids[assign], axis=1)
            order = np.lexsort((idx, dist))
            kept.append(np.sort(idx[order[: idx.size - n_drop]]))
    return np.sort(np.concatenate(kept))


def route_dataset(dataset: LabeledDataset, config: RoutingConfig, iteration: int = -1, chunk: int = 256):
    """Dynamic routing over a dataset.

    Returns the coefficients of the chosen iteration (M, N_i, N_j) and the
    final outputs (M, N_j, d_h).
    """
    n_i, n_j, d = dataset.dims
    coeffs = np.empty((len(dataset), n_i, n_j))
    outputs = np.empty((len(dataset), n_j, d))
    for start in range(0, len(dataset), chunk):
        trace = dynamic_route(dataset.predictions[start : start + chunk], config)
        coeffs[start : start + chunk] = trace.coefficients[:, iteration]
        outputs[start : start + chunk] = trace.outputs
    return coeffs, outputs


def master_from_coefficients(coefficients, labels, n_classes: int, config: BuilderConfig) -> tuple[np.ndarray, np.ndarray]:
    """Filter, accumulate, finalise and reduce. Returns (master values, class counts)."""
    keep = filter_examples(gt_columns(coefficients, labels), labels, n_classes, config.filter)
    containers = accumulate_containers(np.asarray(coefficients)[keep], np.asarray(labels)[keep], n_classes)
    finalized = finalize_containers(containers, config)
    return reduce_to_master(finalized, config), containers.class_counts


def build_master(
    dataset: LabeledDataset,
    routing_config: RoutingConfig | None = None,
    builder_config: BuilderConfig | None = None,
) -> MasterMatrix:
    routing_config = routing_config or RoutingConfig()
    builder_config = builder_config or BuilderConfig()
    coeffs, _ = route_dataset(dataset, routing_config, builder_config.iteration)
    values, counts = master_from_coefficients(coeffs, dataset.labels, dataset.n_classes, builder_config)
    return MasterMatrix(values, builder_config, tuple(counts), dataset_digest(dataset), routing_config)


def build_gt_only_master(coefficients, labels, n_classes: int, config: BuilderConfig | None = None) -> np.ndarray:
    """The GT-columns-only variant: kept for comparison, not for use.

    Accumulates only each example's own-label column into a single N_i x K
    container, averages columns by class frequency and Max-Min normalises
    each row across the K class columns.
    """
    config = config or BuilderConfig()
    coefficients = np.asarray(coefficients, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_i, n_j = coefficients.shape[1:]
    container = np.zeros((n_i, n_classes))
    counts = np.zeros(n_classes, dtype=np.int64)
    for m, y in zip(coefficients, labels):
        container[:, y] += m[:, y]
        counts[y] += 1
    for k, n in enumerate(counts):
        if n == 0:
            raise MissingClassError(k)
    master = np.full((n_i, n_j), config.neutral)
    master[:, :n_classes] = normalize_rows(container / counts, config)
    return master


def replicate_master(master, batch: int) -> np.ndarray:
    """Stack ``batch`` copies of the master into a (batch, N_i, N_j) tensor."""
    if batch < 1:
        raise ValidationError("batch must be >= 1")
    values = getattr(master, "values", master)
    return np.tile(values[None], (batch, 1, 1))
