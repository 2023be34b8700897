"""Correlation signatures, tuning curves and accuracy summaries.

Correlations are Pearson coefficients between ground-truth (GT) columns, the
coefficient column matching each example's own label. A vector with zero
variance has no signature and correlates 0 with everything.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from caproute.errors import DimensionError, MissingClassError, ValidationError


@dataclass
class CorrelationMatrix:
    values: np.ndarray
    symmetric: bool
    row_labels: list[str] = field(default_factory=list)
    col_labels: list[str] = field(default_factory=list)


@dataclass
class TuningCurves:
    values: np.ndarray  # (K, N_j)
    row_labels: list[str] = field(default_factory=list)
    col_labels: list[str] = field(default_factory=list)


@dataclass
class AccuracyReport:
    overall: float
    per_class: np.ndarray  # recall per class; NaN where a class has no labels
    counts: np.ndarray


def _is_constant(x: np.ndarray) -> np.ndarray:
    return np.all(x == x[..., :1], axis=-1)


def _centred(x: np.ndarray) -> np.ndarray:
    # rescaling by max |.| keeps the sums of squares clear of under/overflow
    xc = x - x.mean(axis=-1, keepdims=True)
    scale = np.max(np.abs(xc), axis=-1, keepdims=True)
    return xc / np.where(scale > 0, scale, 1.0)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise DimensionError(f"pearson needs equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise DimensionError("pearson needs at least two samples")
    if _is_constant(x) or _is_constant(y):
        return 0.0
    xc, yc = _centred(x), _centred(y)
    r = np.dot(xc, yc) / np.sqrt(np.dot(xc, xc) * np.dot(yc, yc))
    return float(np.clip(r, -1.0, 1.0))


def standardize_rows(x) -> np.ndarray:
    """Centre and unit-normalise each row so that z_a . z_b is their Pearson r."""
    x = np.asarray(x, dtype=np.float64)
    xc = _centred(x)
    ss = np.sqrt(np.sum(xc * xc, axis=-1, keepdims=True))
    const = _is_constant(x)[..., None]
    return np.where(const, 0.0, xc / np.where(const, 1.0, ss))


def gt_columns(coefficients, labels) -> np.ndarray:
    """Each example's coefficient column for its own label, shape (M, N_i)."""
    coefficients = np.asarray(coefficients)
    labels = np.asarray(labels, dtype=np.int64)
    return coefficients[np.arange(labels.size), :, labels]


def _cross(za: np.ndarray, zb: np.ndarray) -> np.ndarray:
    return np.clip(za @ zb.T, -1.0, 1.0)


def _class_rows(labels: np.ndarray, n_classes: int, min_size: int = 1) -> list[np.ndarray]:
    groups = []
    for k in range(n_classes):
        idx = np.flatnonzero(labels == k)
        if idx.size == 0:
            raise MissingClassError(k)
        if idx.size < min_size:
            raise ValidationError(f"class {k} needs at least {min_size} examples, has {idx.size}")
        groups.append(idx)
    return groups


def gt_correlation_matrix(coefficients, labels, first: int | None = None) -> CorrelationMatrix:
    """Pairwise GT-column correlations for the first ``first`` examples."""
    coefficients = np.asarray(coefficients, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if first is not None:
        coefficients, labels = coefficients[:first], labels[:first]
    if labels.size < 2:
        raise ValidationError("need at least two examples")
    z = standardize_rows(gt_columns(coefficients, labels))
    r = _cross(z, z)
    r = 0.5 * (r + r.T)
    names = [f"{e}:{y}" for e, y in enumerate(labels)]
    return CorrelationMatrix(r, True, names, list(names))


def class_mean_correlations(coefficients, labels, n_classes: int) -> CorrelationMatrix:
    """Mean GT-column correlation over all cross-class pairs; self-pairs excluded on the diagonal."""
    labels = np.asarray(labels, dtype=np.int64)
    z = standardize_rows(gt_columns(coefficients, labels))
    groups = _class_rows(labels, n_classes, min_size=2)
    out = np.zeros((n_classes, n_classes))
    for a in range(n_classes):
        za = z[groups[a]]
        for b in range(a, n_classes):
            block = _cross(za, z[groups[b]])
            if a == b:
                n = block.shape[0]
                out[a, a] = (block.sum() - np.trace(block)) / (n * (n - 1))
            else:
                out[a, b] = out[b, a] = block.mean()
    names = [str(k) for k in range(n_classes)]
    return CorrelationMatrix(out, True, names, list(names))


def master_class_correlations(master, coefficients, labels, n_classes: int) -> CorrelationMatrix:
    """Entry (a, b): mean correlation of master column a with GT columns of class-b examples."""
    values = np.asarray(getattr(master, "values", master), dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    coefficients = np.asarray(coefficients, dtype=np.float64)
    if values.shape != coefficients.shape[1:]:
        raise DimensionError(f"master {values.shape} does not match coefficients {coefficients.shape[1:]}")
    zm = standardize_rows(values[:, :n_classes].T)
    z = standardize_rows(gt_columns(coefficients, labels))
    groups = _class_rows(labels, n_classes)
    out = np.zeros((n_classes, n_classes))
    for b in range(n_classes):
        out[:, b] = _cross(zm, z[groups[b]]).mean(axis=1)
    return CorrelationMatrix(
        out, False, [f"master{k}" for k in range(n_classes)], [f"class{k}" for k in range(n_classes)]
    )


def tuning_curves(outputs, labels, n_classes: int) -> TuningCurves:
    """Class-averaged output capsule lengths, one row per true class."""
    norms = np.linalg.norm(np.asarray(outputs, dtype=np.float64), axis=-1)
    labels = np.asarray(labels, dtype=np.int64)
    if norms.shape[0] != labels.size:
        raise DimensionError("one label per output required")
    groups = _class_rows(labels, n_classes)
    curves = np.stack([norms[idx].mean(axis=0) for idx in groups])
    return TuningCurves(curves, [str(k) for k in range(n_classes)], [f"v{j}" for j in range(norms.shape[1])])


def accuracy_report(predictions, labels, n_classes: int | None = None) -> AccuracyReport:
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape or labels.ndim != 1:
        raise DimensionError("predictions and labels must be equal-length vectors")
    if labels.size == 0:
        raise ValidationError("need at least one prediction")
    if n_classes is None:
        n_classes = int(max(predictions.max(), labels.max())) + 1
    hit = predictions == labels
    counts = np.bincount(labels, minlength=n_classes)
    correct = np.bincount(labels, weights=hit, minlength=n_classes)
    with np.errstate(invalid="ignore", divide="ignore"):
        recall = np.where(counts > 0, correct / np.maximum(counts, 1), np.nan)
    return AccuracyReport(float(hit.mean()), recall, counts)
