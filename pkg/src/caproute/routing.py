"""Routing-by-agreement between two capsule layers.

Array conventions (a leading batch axis is allowed everywhere):

    prediction vectors  u_hat  (..., N_i, N_j, d_h)
    coefficients / logits      (..., N_i, N_j)
    capsule outputs     v      (..., N_j, d_h)

Everything is computed in float64. ``np.einsum`` is used without path
optimisation so results do not depend on BLAS threading.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from caproute.errors import DimensionError, ValidationError


class NormKind(str, enum.Enum):
    MAXMIN = "maxmin"
    SOFTMAX = "softmax"


@dataclass(frozen=True)
class RoutingConfig:
    iterations: int = 3
    norm: NormKind = NormKind.MAXMIN
    lower: float = 0.0
    upper: float = 1.0
    # None picks the natural start for the norm: 1.0 for Max-Min,
    # 1/N_j (softmax of zero logits) for Softmax.
    init_coefficient: float | None = None
    epsilon: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "norm", NormKind(self.norm))
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ValidationError(f"iterations must be an integer >= 1, got {self.iterations}")
        if not self.lower < self.upper:
            raise ValidationError(f"need lower < upper, got p={self.lower}, q={self.upper}")
        if not self.epsilon > 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")
        if self.init_coefficient is not None and not np.isfinite(self.init_coefficient):
            raise ValidationError("init_coefficient must be finite")

    def initial_coefficient(self, n_upper: int) -> float:
        if self.init_coefficient is not None:
            return float(self.init_coefficient)
        if self.norm is NormKind.SOFTMAX:
            return 1.0 / n_upper
        return 1.0

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "norm": self.norm.value,
            "lower": self.lower,
            "upper": self.upper,
            "init_coefficient": self.init_coefficient,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoutingConfig":
        return cls(**d)


@dataclass(frozen=True)
class RoutingTrace:
    """Coefficients recorded after each normalisation, plus the final outputs.

    ``coefficients`` has shape (r, N_i, N_j), or (B, r, N_i, N_j) for a
    batch. The pre-loop state is the constant ``initial_coefficient``.
    """

    coefficients: np.ndarray
    outputs: np.ndarray
    initial_coefficient: float

    @property
    def last_coefficients(self) -> np.ndarray:
        return self.coefficients[..., -1, :, :]


def _as_f64(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def _check_predictions(u_hat: np.ndarray) -> None:
    if u_hat.ndim < 3 or min(u_hat.shape[-3:]) < 1:
        raise DimensionError(f"prediction tensor must be (..., N_i, N_j, d_h), got {u_hat.shape}")


def predict_vectors(u, w) -> np.ndarray:
    """u_hat[i, j] = W[i, j] @ u[i] for u (..., N_i, d_l), W (N_i, N_j, d_h, d_l)."""
    u = _as_f64(u, "lower capsules")
    w = _as_f64(w, "transform tensor")
    if w.ndim != 4 or u.ndim < 2:
        raise DimensionError(f"expected u (..., N_i, d_l) and W (N_i, N_j, d_h, d_l), got {u.shape}, {w.shape}")
    if u.shape[-2] != w.shape[0] or u.shape[-1] != w.shape[3]:
        raise DimensionError(f"shape mismatch: u {u.shape} vs W {w.shape}")
    return np.einsum("ijhl,...il->...ijh", w, u)


def squash(s, epsilon: float = 1e-12) -> np.ndarray:
    """Squash along the last axis: v = |s|^2 / (1 + |s|^2) * s / |s|.

    Vectors with norm <= epsilon map to zero. The output norm is < 1 in exact
    arithmetic; in float64 it rounds to 1.0 once |s| exceeds roughly 1e8.
    """
    s = np.asarray(s, dtype=np.float64)
    sq = np.sum(s * s, axis=-1, keepdims=True)
    norm = np.sqrt(sq)
    live = norm > epsilon
    safe = np.where(live, norm, 1.0)
    scale = np.where(live, sq / (1.0 + sq) / safe, 0.0)
    return s * scale


def normalize_rows(b, config) -> np.ndarray:
    """Normalise logits over the last (upper-capsule) axis.

    ``config`` needs ``norm``, ``lower``, ``upper`` and ``epsilon``; both
    RoutingConfig and the master BuilderConfig qualify. Rows whose spread is
    <= epsilon become (p+q)/2 under Max-Min and 1/N_j under Softmax.
    """
    b = np.asarray(b, dtype=np.float64)
    hi = b.max(axis=-1, keepdims=True)
    lo = b.min(axis=-1, keepdims=True)
    degenerate = (hi - lo) <= config.epsilon
    n_upper = b.shape[-1]

    if NormKind(config.norm) is NormKind.SOFTMAX:
        e = np.exp(b - hi)
        out = e / e.sum(axis=-1, keepdims=True)
        return np.where(degenerate, 1.0 / n_upper, out)

    p, q = float(config.lower), float(config.upper)
    span = np.where(degenerate, 1.0, hi - lo)
    t = (b - lo) / span
    # p*(1-t) + q*t hits p and q exactly at t = 0 and t = 1.
    out = np.clip(p * (1.0 - t) + q * t, p, q)
    return np.where(degenerate, 0.5 * (p + q), out)


def weighted_sum(c, u_hat) -> np.ndarray:
    """s[j] = sum_i c[i, j] * u_hat[i, j]."""
    c = np.asarray(c, dtype=np.float64)
    u_hat = np.asarray(u_hat, dtype=np.float64)
    _check_predictions(u_hat)
    if c.ndim < 2 or c.shape[-2:] != u_hat.shape[-3:-1]:
        raise DimensionError(f"coefficients {c.shape} do not match predictions {u_hat.shape}")
    return np.einsum("...ij,...ijd->...jd", c, u_hat)


def agreement_update(b, u_hat, v) -> np.ndarray:
    """b[i, j] + u_hat[i, j] . v[j]."""
    b = np.asarray(b, dtype=np.float64)
    u_hat = np.asarray(u_hat, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_predictions(u_hat)
    if b.shape[-2:] != u_hat.shape[-3:-1] or v.shape[-2:] != u_hat.shape[-2:]:
        raise DimensionError(f"shape mismatch: b {b.shape}, u_hat {u_hat.shape}, v {v.shape}")
    return b + np.einsum("...ijd,...jd->...ij", u_hat, v)


def dynamic_route(u_hat, config: RoutingConfig | None = None) -> RoutingTrace:
    """Iterative routing-by-agreement with Max-Min or Softmax normalisation.

    Logits start at zero and accumulate across iterations; coefficients start
    at ``config.initial_coefficient``. Each iteration records the normalised
    coefficients produced at its end.
    """
    config = config or RoutingConfig()
    u_hat = _as_f64(u_hat, "prediction tensor")
    _check_predictions(u_hat)
    n_upper = u_hat.shape[-2]
    shape = u_hat.shape[:-1]

    c0 = config.initial_coefficient(n_upper)
    c = np.full(shape, c0)
    b = np.zeros(shape)
    history = []
    v = None
    for _ in range(config.iterations):
        s = weighted_sum(c, u_hat)
        v = squash(s, config.epsilon)
        b = agreement_update(b, u_hat, v)
        c = normalize_rows(b, config)
        history.append(c)
    return RoutingTrace(
        coefficients=np.stack(history, axis=-3),
        outputs=v,
        initial_coefficient=c0,
    )


def fast_route(u_hat, master, epsilon: float = 1e-12) -> np.ndarray:
    """Single pass with fixed coefficients: squash(sum_i C[i, j] u_hat[i, j]).

    ``master`` is a MasterMatrix or an array of shape (..., N_i, N_j), e.g.
    a replicated batch tensor.
    """
    values = getattr(master, "values", master)
    u_hat = _as_f64(u_hat, "prediction tensor")
    return squash(weighted_sum(values, u_hat), epsilon)


def capsule_norms(v) -> np.ndarray:
    return np.linalg.norm(np.asarray(v, dtype=np.float64), axis=-1)


def classify(v):
    """Index of the longest output capsule; ties go to the lowest index."""
    norms = capsule_norms(v)
    out = np.argmax(norms, axis=-1)
    return int(out) if out.ndim == 0 else out
