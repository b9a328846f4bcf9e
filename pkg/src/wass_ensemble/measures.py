"""Core value types: supports, histograms, ensemble inputs.

All types are immutable after construction (arrays are frozen), so they can
be shared freely across threads; every operation here is pure.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, TYPE_CHECKING

import numpy as np

from .errors import (
    InvalidWeights,
    NaNEntry,
    NegativeMass,
    NormalizationMismatch,
    SupportMismatch,
    ZeroTotalMass,
)

if TYPE_CHECKING:  # pragma: no cover
    from .ground_metric import GroundMetric

# Accepted drift on externally supplied histograms; Sinkhorn noise floor.
NORMALIZATION_TOL = 1e-9
# Drift allowed after an internal renormalization.
RENORMALIZATION_TOL = 1e-12
WEIGHT_TOL = 1e-12


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Support:
    """Labeled bins, optionally embedded as points in R^d."""

    labels: tuple
    points: Optional[np.ndarray] = None

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(set(labels)) != len(labels):
            raise ValueError("support labels must be unique")
        if self.points is not None:
            pts = _frozen_array(self.points)
            if pts.ndim != 2:
                raise ValueError("points must be a 2-D array (one row per label)")
            if pts.shape[0] != len(labels):
                raise ValueError("points count must match label count")
            if not np.all(np.isfinite(pts)):
                raise ValueError("support points must be finite")
            object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Support):
            return NotImplemented
        if self.labels != other.labels:
            return False
        if (self.points is None) != (other.points is None):
            return False
        if self.points is None:
            return True
        return self.points.shape == other.points.shape and bool(
            np.array_equal(self.points, other.points)
        )

    def __hash__(self):
        return hash(self.labels)


@dataclass(frozen=True, eq=False)
class Histogram:
    """A nonnegative prediction vector over a labeled support."""

    support: Support
    mass: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        mass = _frozen_array(self.mass)
        if mass.ndim != 1:
            raise ValueError("mass must be a 1-D vector")
        if mass.shape[0] != len(self.support):
            raise ValueError(
                f"mass length {mass.shape[0]} does not match support size {len(self.support)}"
            )
        object.__setattr__(self, "mass", mass)

    @property
    def total(self) -> float:
        return float(np.sum(self.mass))

    def __len__(self) -> int:
        return len(self.support)


def validate(h: Histogram) -> Histogram:
    """Check value invariants and return `h` unchanged.

    Raises NaNEntry for non-finite entries, NegativeMass for negative ones,
    and NormalizationMismatch when the normalized flag disagrees with the
    actual total (tolerance NORMALIZATION_TOL).
    """
    if not np.all(np.isfinite(h.mass)):
        raise NaNEntry("histogram contains a non-finite entry")
    if np.any(h.mass < 0):
        raise NegativeMass("histogram contains a negative entry")
    if h.normalized and abs(h.total - 1.0) > NORMALIZATION_TOL:
        raise NormalizationMismatch(
            f"flagged normalized but mass sums to {h.total!r}"
        )
    return h


def normalize(h: Histogram) -> Histogram:
    """Scale mass to total 1 and set the normalized flag.

    Idempotent: a histogram already flagged normalized and within the
    internal tolerance is returned as-is, so repeated calls are exact no-ops.
    """
    if h.normalized and abs(h.total - 1.0) <= RENORMALIZATION_TOL:
        return h
    total = h.total
    if not np.isfinite(total) or total <= 0.0:
        raise ZeroTotalMass(f"cannot normalize total mass {total!r}")
    return Histogram(h.support, h.mass / total, normalized=True)


@dataclass(frozen=True, eq=False)
class EnsembleWeights:
    """Positive convex weights, one per model."""

    lambdas: np.ndarray

    def __post_init__(self):
        lam = _frozen_array(self.lambdas)
        if lam.ndim != 1 or lam.size < 1:
            raise InvalidWeights("weights must be a non-empty 1-D vector")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise InvalidWeights("all weights must be finite and > 0")
        if abs(float(np.sum(lam)) - 1.0) > WEIGHT_TOL:
            raise InvalidWeights(f"weights sum to {float(np.sum(lam))!r}, expected 1")
        object.__setattr__(self, "lambdas", lam)

    @classmethod
    def uniform(cls, m: int) -> "EnsembleWeights":
        return cls(np.full(m, 1.0 / m))

    def __len__(self) -> int:
        return self.lambdas.size


@dataclass(frozen=True, eq=False)
class EnsembleInput:
    """m model histograms with weights and (optionally) per-model kernels.

    Kernels may be omitted for closed-form means; the barycenter solvers
    require them. All kernels must share one target support and kernel `l`
    must have the source support of model `l`.
    """

    models: tuple
    weights: Optional[EnsembleWeights] = None
    kernels: Optional[tuple] = None

    def __post_init__(self):
        models = tuple(self.models)
        if len(models) < 1:
            raise ValueError("an ensemble needs at least one model")
        object.__setattr__(self, "models", models)
        weights = self.weights
        if weights is None:
            weights = EnsembleWeights.uniform(len(models))
        if len(weights) != len(models):
            raise InvalidWeights(
                f"{len(weights)} weights for {len(models)} models"
            )
        object.__setattr__(self, "weights", weights)
        if self.kernels is not None:
            kernels = tuple(self.kernels)
            if len(kernels) != len(models):
                raise SupportMismatch(
                    f"{len(kernels)} kernels for {len(models)} models"
                )
            target = kernels[0].target
            for l, (model, gm) in enumerate(zip(models, kernels)):
                if gm.source != model.support:
                    raise SupportMismatch(
                        f"kernel {l} source support differs from model {l} support"
                    )
                if gm.target != target:
                    raise SupportMismatch("kernels do not share one target support")
            object.__setattr__(self, "kernels", kernels)

    @property
    def m(self) -> int:
        return len(self.models)

    @property
    def target_support(self) -> Support:
        if self.kernels is not None:
            return self.kernels[0].target
        return self.models[0].support


def require_shared_support(models: Sequence[Histogram]) -> Support:
    """Return the common support or raise SupportMismatch."""
    support = models[0].support
    for l, h in enumerate(models):
        if h.support != support:
            raise SupportMismatch(f"model {l} is on a different support")
    return support
