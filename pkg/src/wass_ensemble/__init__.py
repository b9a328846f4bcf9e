"""Ensembling of model predictions via entropic-regularized transport.

Balanced and unbalanced barycenter solvers over semantic kernels, plus the
closed-form arithmetic/geometric means, ground-metric constructors,
diagnostics, and evaluation pipelines.
"""

from .barycenter import (
    BarycenterResult,
    Coupling,
    SolverParams,
    attribute_sources,
    balanced_barycenter,
    unbalanced_barycenter,
)
from .diagnostics import (
    BoundCheck,
    DiagnosticsReport,
    check_entropy_lemma,
    check_output_bounds,
    coupling_entropy,
    entropy,
    smoothness_energy,
)
from .frechet import (
    MeanOptions,
    arithmetic_mean,
    extended_kl,
    geometric_mean,
    performance_weights,
)
from .ground_metric import (
    DiagonalKernelParams,
    GroundMetric,
    attribute_class_kernel,
    cost_from_embeddings,
    diagonal_topn_kernel,
    identity_kernel,
    kernel_from_cost,
    kernel_from_graph,
)
from .measures import (
    EnsembleInput,
    EnsembleWeights,
    Histogram,
    Support,
    normalize,
    validate,
)
from .transport import (
    OTResult,
    exact_barycenter_2bin,
    exact_ot_2bin,
    sinkhorn_distance,
)

__version__ = "0.1.0"

__all__ = [
    "BarycenterResult",
    "BoundCheck",
    "Coupling",
    "DiagnosticsReport",
    "DiagonalKernelParams",
    "EnsembleInput",
    "EnsembleWeights",
    "GroundMetric",
    "Histogram",
    "MeanOptions",
    "OTResult",
    "SolverParams",
    "Support",
    "arithmetic_mean",
    "attribute_class_kernel",
    "attribute_sources",
    "balanced_barycenter",
    "check_entropy_lemma",
    "check_output_bounds",
    "cost_from_embeddings",
    "coupling_entropy",
    "diagonal_topn_kernel",
    "entropy",
    "exact_barycenter_2bin",
    "exact_ot_2bin",
    "extended_kl",
    "geometric_mean",
    "identity_kernel",
    "kernel_from_cost",
    "kernel_from_graph",
    "normalize",
    "performance_weights",
    "sinkhorn_distance",
    "smoothness_energy",
    "unbalanced_barycenter",
    "validate",
]
