"""Closed-form ensemble means and performance-based weights.

The weighted arithmetic mean sum_l lambda_l * mu_l minimizes the weighted
sum of squared l2 distances; the weighted geometric mean prod_l mu_l^lambda_l
minimizes the weighted sum of extended KL divergences. Both are evaluated
elementwise on a shared support.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NonPositiveScore
from .measures import (
    NORMALIZATION_TOL,
    EnsembleInput,
    EnsembleWeights,
    Histogram,
    require_shared_support,
)


@dataclass(frozen=True)
class MeanOptions:
    """Zero-handling policy for the geometric mean.

    Entries below `zero_floor` are raised to it before exponentiation so a
    single zero bin cannot annihilate the whole bin across the ensemble.
    """

    renormalize_output: bool = False
    zero_floor: float = 1e-12

    def __post_init__(self):
        if self.zero_floor < 0:
            raise ValueError("zero_floor must be >= 0")


def _flag_if_normalized(total: float) -> bool:
    return abs(total - 1.0) <= NORMALIZATION_TOL


def arithmetic_mean(ens: EnsembleInput) -> Histogram:
    """Weighted elementwise average of the model histograms."""
    support = require_shared_support(ens.models)
    acc = np.zeros(len(support))
    for lam, h in zip(ens.weights.lambdas, ens.models):
        acc = acc + lam * h.mass
    return Histogram(support, acc, normalized=_flag_if_normalized(float(acc.sum())))


def geometric_mean(ens: EnsembleInput, opts: Optional[MeanOptions] = None) -> Histogram:
    """Weighted elementwise geometric mean, computed in the log domain.

    Not renormalized by default: the raw product is what the identity-kernel
    fixed point of the balanced solver reproduces exactly.
    """
    opts = opts or MeanOptions()
    support = require_shared_support(ens.models)
    acc = np.zeros(len(support))
    with np.errstate(divide="ignore"):
        for lam, h in zip(ens.weights.lambdas, ens.models):
            acc = acc + lam * np.log(np.maximum(h.mass, opts.zero_floor))
    out = np.exp(acc)
    if opts.renormalize_output:
        out = out / out.sum()
    return Histogram(support, out, normalized=_flag_if_normalized(float(out.sum())))


def performance_weights(scores) -> EnsembleWeights:
    """Normalize per-model validation scores into ensemble weights."""
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size < 1:
        raise NonPositiveScore("scores must be a non-empty 1-D vector")
    if not np.all(np.isfinite(s)) or np.any(s <= 0):
        raise NonPositiveScore("all scores must be finite and > 0")
    return EnsembleWeights(s / s.sum())


def extended_kl(p, q) -> float:
    """Extended KL divergence for unnormalized nonnegative vectors:
    sum_i p_i log(p_i/q_i) - p_i + q_i, with 0 log 0 := 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p > 0, p * np.log(p / q), 0.0)
    return float(np.sum(ratio - p + q))
