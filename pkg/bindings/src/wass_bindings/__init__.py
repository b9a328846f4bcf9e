"""Array-first bindings for the wass-ensemble solvers.

Entry points accept plain dense float64 buffers (one marshaling copy per
call), delegate to the core library, and return numpy arrays plus a small
info record. Results are bitwise-identical to direct core calls on the
same machine. No global state is held, so concurrent calls from multiple
threads are safe.

Core failures surface as ValueError carrying the core error name, so
pipeline code can treat every misuse as a standard argument error.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from wass_ensemble import (
    EnsembleInput,
    EnsembleWeights,
    GroundMetric,
    Histogram,
    MeanOptions,
    SolverParams,
    Support,
)
from wass_ensemble import arithmetic_mean as _core_arithmetic
from wass_ensemble import balanced_barycenter as _core_balanced
from wass_ensemble import entropy as _core_entropy
from wass_ensemble import geometric_mean as _core_geometric
from wass_ensemble import normalize as _core_normalize
from wass_ensemble import smoothness_energy as _core_smoothness
from wass_ensemble import unbalanced_barycenter as _core_unbalanced
from wass_ensemble.errors import WassEnsembleError
from wass_ensemble.ground_metric import KERNEL_FLOOR

__version__ = "0.1.0"

__all__ = [
    "arithmetic_mean",
    "barycenter_balanced",
    "barycenter_unbalanced",
    "diagnostics",
    "geometric_mean",
    "py_barycenter",
]


def _marshal_matrix(values, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _marshal_models(models) -> np.ndarray:
    return _marshal_matrix(models, "models")


def _supports_for(n_bins: int, m_bins: int):
    src = Support(tuple(f"s{i}" for i in range(n_bins)))
    tgt = src if m_bins == n_bins else Support(tuple(f"t{j}" for j in range(m_bins)))
    return src, tgt


def _build_ensemble(models, kernels, weights, normalized: bool) -> EnsembleInput:
    mat = _marshal_models(models)
    m, n = mat.shape
    if kernels is None:
        raise ValueError("kernels are required (one N x M array per model)")
    kernel_arrays = [_marshal_matrix(k, f"kernels[{l}]") for l, k in enumerate(kernels)]
    if len(kernel_arrays) != m:
        raise ValueError(f"{len(kernel_arrays)} kernels for {m} models")
    m_bins = kernel_arrays[0].shape[1]
    for l, k in enumerate(kernel_arrays):
        if k.shape != (n, m_bins):
            raise ValueError(
                f"kernels[{l}] has shape {k.shape}, expected {(n, m_bins)}"
            )
    src, tgt = _supports_for(n, m_bins)
    try:
        gms = tuple(
            GroundMetric(source=src, target=tgt,
                         kernel=np.maximum(k, KERNEL_FLOOR))
            for k in kernel_arrays
        )
        w = None if weights is None else EnsembleWeights(
            np.ascontiguousarray(weights, dtype=np.float64)
        )
        histograms = tuple(
            Histogram(src, row, normalized=normalized) for row in mat
        )
        return EnsembleInput(models=histograms, weights=w, kernels=gms)
    except WassEnsembleError as exc:
        raise ValueError(f"{exc.name}: {exc}") from exc


def _info(result) -> dict:
    return {
        "iterations_run": result.iterations_run,
        "final_residual": result.final_residual,
        "converged": result.converged,
    }


def barycenter_balanced(
    models,
    kernels,
    weights=None,
    epsilon: Optional[float] = None,
    max_iter: int = 5,
    tolerance: float = 1e-9,
    renormalize_output: bool = False,
    log_domain: str = "auto",
):
    """Balanced consensus of normalized prediction rows.

    models: m x N array; kernels: one N x M positive array per model;
    weights: length-m positive array summing to 1 (uniform when omitted).
    Returns (p, info).
    """
    ens = _build_ensemble(models, kernels, weights, normalized=False)
    params = SolverParams(
        epsilon=epsilon, max_iter=max_iter, tolerance=tolerance,
        renormalize_output=renormalize_output, log_domain=log_domain,
    )
    try:
        result = _core_balanced(ens, params)
    except WassEnsembleError as exc:
        raise ValueError(f"{exc.name}: {exc}") from exc
    return result.barycenter.mass.copy(), _info(result)


def barycenter_unbalanced(
    models,
    kernels,
    weights=None,
    epsilon: float = 0.3,
    kl_lambda: float = 1.0,
    max_iter: int = 5,
    tolerance: float = 1e-9,
    renormalize_output: bool = False,
    log_domain: str = "auto",
):
    """Unbalanced consensus of unnormalized score rows. Returns (p, info)."""
    ens = _build_ensemble(models, kernels, weights, normalized=False)
    params = SolverParams(
        epsilon=epsilon, kl_lambda=kl_lambda, max_iter=max_iter,
        tolerance=tolerance, renormalize_output=renormalize_output,
        log_domain=log_domain,
    )
    try:
        result = _core_unbalanced(ens, params)
    except WassEnsembleError as exc:
        raise ValueError(f"{exc.name}: {exc}") from exc
    return result.barycenter.mass.copy(), _info(result)


def py_barycenter(models, kernels, weights=None, params: Optional[dict] = None):
    """Single dispatch point: runs the unbalanced solver when the params
    record carries a kl_lambda, the balanced solver otherwise."""
    params = dict(params or {})
    if params.get("kl_lambda") is not None:
        return barycenter_unbalanced(models, kernels, weights, **params)
    return barycenter_balanced(models, kernels, weights, **params)


def _mean_ensemble(models, weights) -> EnsembleInput:
    mat = _marshal_models(models)
    src = Support(tuple(f"s{i}" for i in range(mat.shape[1])))
    try:
        w = None if weights is None else EnsembleWeights(
            np.ascontiguousarray(weights, dtype=np.float64)
        )
        histograms = tuple(Histogram(src, row) for row in mat)
        return EnsembleInput(models=histograms, weights=w)
    except WassEnsembleError as exc:
        raise ValueError(f"{exc.name}: {exc}") from exc


def arithmetic_mean(models, weights=None) -> np.ndarray:
    """Weighted elementwise average of the model rows."""
    try:
        return _core_arithmetic(_mean_ensemble(models, weights)).mass.copy()
    except WassEnsembleError as exc:
        raise ValueError(f"{exc.name}: {exc}") from exc


def geometric_mean(models, weights=None, zero_floor: float = 1e-12,
                   renormalize: bool = False) -> np.ndarray:
    """Weighted elementwise geometric mean of the model rows."""
    opts = MeanOptions(renormalize_output=renormalize, zero_floor=zero_floor)
    try:
        return _core_geometric(_mean_ensemble(models, weights), opts).mass.copy()
    except WassEnsembleError as exc:
        raise ValueError(f"{exc.name}: {exc}") from exc


def diagnostics(p, models, weights=None, points=None) -> dict:
    """Entropy and smoothness report for an ensemble output.

    Returns {entropy, per_model_entropies, entropy_bound_satisfied} and,
    when embedding points are supplied, {smoothness_energy,
    smoothness_bound_satisfied}. p is renormalized for the entropy terms.
    """
    vec = np.ascontiguousarray(p, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError("p must be a 1-D array")
    mat = _marshal_models(models)
    if mat.shape[1] != vec.shape[0]:
        raise ValueError("models and p disagree on the number of bins")
    pts = None
    if points is not None:
        pts = _marshal_matrix(points, "points")
        if pts.shape[0] != vec.shape[0]:
            raise ValueError("points and p disagree on the number of bins")
    src = Support(tuple(f"s{i}" for i in range(vec.shape[0])), pts)
    lam = (
        np.full(mat.shape[0], 1.0 / mat.shape[0])
        if weights is None
        else np.ascontiguousarray(weights, dtype=np.float64)
    )
    try:
        hist = Histogram(src, vec)
        model_hists = [Histogram(src, row) for row in mat]
        h_p = _core_entropy(_core_normalize(hist))
        h_models = [
            _core_entropy(_core_normalize(h)) for h in model_hists
        ]
        out = {
            "entropy": h_p,
            "per_model_entropies": np.array(h_models),
            "entropy_bound_satisfied": bool(
                h_p >= float(np.dot(lam, h_models)) - 1e-9
            ),
        }
        if pts is not None:
            e_p = _core_smoothness(hist)
            e_models = [_core_smoothness(h) for h in model_hists]
            out["smoothness_energy"] = e_p
            out["smoothness_bound_satisfied"] = bool(
                e_p <= float(np.dot(lam, e_models)) + 1e-9
            )
        return out
    except WassEnsembleError as exc:
        raise ValueError(f"{exc.name}: {exc}") from exc
