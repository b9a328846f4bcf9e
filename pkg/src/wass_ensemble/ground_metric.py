"""Cost matrices and kernels between source and target supports.

A GroundMetric bundles a cost matrix C (squared-distance units), the
positive kernel K used by the scaling solvers, and the regularization
epsilon that links them via K = exp(-C/epsilon). Kernels can also be built
directly from graphs, per-sample posteriors, or attribute/class tables, in
which case no cost or epsilon is attached.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    AsymmetricAdjacency,
    DimensionMismatch,
    EmptyColumn,
    EmptyPosteriors,
    MissingPoints,
    UnderflowAllZeroRow,
)
from .measures import Support, _frozen_array

# Floor for kernel entries that are zero or underflow: the scaling updates
# divide by K v, so exact zeros would produce NaNs.
KERNEL_FLOOR = 1e-300


@dataclass(frozen=True, eq=False)
class GroundMetric:
    """Cost and/or kernel between a source and a target support.

    `identity_distance` is the Frobenius norm of K - I, defined for square
    kernels only; it measures how far the kernel is from the no-semantics
    identity regime.
    """

    source: Support
    target: Support
    kernel: Optional[np.ndarray] = None
    cost: Optional[np.ndarray] = None
    epsilon: Optional[float] = None
    identity_distance: Optional[float] = None

    def __post_init__(self):
        shape = (len(self.source), len(self.target))
        if self.cost is not None:
            cost = _frozen_array(self.cost)
            if cost.shape != shape:
                raise ValueError(f"cost shape {cost.shape} does not match supports {shape}")
            if not np.all(np.isfinite(cost)) or np.any(cost < 0):
                raise ValueError("cost entries must be finite and nonnegative")
            object.__setattr__(self, "cost", cost)
        if self.kernel is not None:
            kernel = _frozen_array(self.kernel)
            if kernel.shape != shape:
                raise ValueError(f"kernel shape {kernel.shape} does not match supports {shape}")
            if not np.all(np.isfinite(kernel)) or np.any(kernel <= 0):
                raise ValueError("kernel entries must be finite and > 0")
            object.__setattr__(self, "kernel", kernel)
            if self.cost is not None and self.epsilon is not None:
                expected = np.exp(-self.cost / self.epsilon)
                # Entries at the clamp floor are exempt: there exp underflowed.
                ok = np.abs(kernel - expected) <= 1e-12 * expected + KERNEL_FLOOR
                if not np.all(ok):
                    raise ValueError("kernel is inconsistent with exp(-cost/epsilon)")
        if self.kernel is None and self.cost is None:
            raise ValueError("a GroundMetric needs a cost or a kernel")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")

    @property
    def shape(self) -> tuple:
        return (len(self.source), len(self.target))


def _clamp_kernel(kernel: np.ndarray) -> np.ndarray:
    return np.maximum(kernel, KERNEL_FLOOR)


def _default_support(n: int, prefix: str = "bin") -> Support:
    return Support(tuple(f"{prefix}{i}" for i in range(n)))


def cost_from_embeddings(
    src: Support, tgt: Support, normalize_vectors: bool = True
) -> GroundMetric:
    """Squared Euclidean cost between support points.

    With `normalize_vectors` each point is scaled to unit l2 norm first,
    the usual convention for word-embedding costs.
    """
    if src.points is None or tgt.points is None:
        raise MissingPoints("both supports must carry embedding points")
    x, y = src.points, tgt.points
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatch(
            f"source dim {x.shape[1]} != target dim {y.shape[1]}"
        )
    if normalize_vectors:
        xn = np.linalg.norm(x, axis=1, keepdims=True)
        yn = np.linalg.norm(y, axis=1, keepdims=True)
        if np.any(xn == 0) or np.any(yn == 0):
            raise ValueError("cannot unit-normalize a zero embedding vector")
        x, y = x / xn, y / yn
    diff = x[:, None, :] - y[None, :, :]
    cost = np.einsum("ijd,ijd->ij", diff, diff)
    return GroundMetric(source=src, target=tgt, cost=cost)


def kernel_from_cost(gm: GroundMetric, epsilon: float) -> GroundMetric:
    """Exponentiate the cost: K = exp(-C/epsilon), clamped away from zero.

    Raises UnderflowAllZeroRow if some row of K underflows entirely, which
    means epsilon is far too small for that row's costs.
    """
    if gm.cost is None:
        raise ValueError("kernel_from_cost requires a cost matrix")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    kernel = np.exp(-gm.cost / epsilon)
    dead = ~np.any(kernel > 0, axis=1)
    if np.any(dead):
        rows = np.nonzero(dead)[0].tolist()
        raise UnderflowAllZeroRow(f"kernel rows {rows} underflowed to zero")
    kernel = _clamp_kernel(kernel)
    ident = None
    if kernel.shape[0] == kernel.shape[1]:
        ident = float(np.linalg.norm(kernel - np.eye(kernel.shape[0])))
    return GroundMetric(
        source=gm.source,
        target=gm.target,
        kernel=kernel,
        cost=gm.cost,
        epsilon=float(epsilon),
        identity_distance=ident,
    )


def kernel_from_graph(
    adjacency: np.ndarray, self_weight: float, support: Optional[Support] = None
) -> GroundMetric:
    """Kernel from a similarity graph: adjacency off the diagonal,
    `self_weight` on it, zeros clamped to the kernel floor."""
    adj = np.asarray(adjacency, dtype=float)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency must be square")
    if not np.array_equal(adj, adj.T):
        raise AsymmetricAdjacency("adjacency matrix is not symmetric")
    if np.any(adj < 0) or not np.all(np.isfinite(adj)):
        raise ValueError("adjacency weights must be finite and nonnegative")
    if self_weight <= 0:
        raise ValueError("self_weight must be > 0")
    if support is None:
        support = _default_support(adj.shape[0])
    kernel = adj.copy()
    np.fill_diagonal(kernel, self_weight)
    kernel = _clamp_kernel(kernel)
    ident = float(np.linalg.norm(kernel - np.eye(kernel.shape[0])))
    return GroundMetric(
        source=support, target=support, kernel=kernel, identity_distance=ident
    )


def identity_kernel(support: Support) -> GroundMetric:
    """The no-semantics kernel K = I (off-diagonal at the clamp floor)."""
    n = len(support)
    kernel = _clamp_kernel(np.eye(n))
    return GroundMetric(source=support, target=support, kernel=kernel,
                        identity_distance=0.0)


@dataclass(frozen=True)
class DiagonalKernelParams:
    """Per-sample diagonal kernel parameters: top-N membership and the
    floor value zeta assigned to non-top categories."""

    top_n: int
    floor_zeta: float

    def __post_init__(self):
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        if self.floor_zeta <= 0:
            raise ValueError("floor_zeta must be > 0")


def diagonal_topn_kernel(
    posteriors: Sequence[np.ndarray],
    params: DiagonalKernelParams,
    support: Optional[Support] = None,
) -> GroundMetric:
    """Diagonal kernel for one multi-label sample.

    Categories in the union of every model's top-N sets get the mean of all
    model posteriors on the diagonal; every other category gets zeta. Ties
    at the top-N boundary break toward the lower category index.
    """
    posts = [np.asarray(p, dtype=float) for p in posteriors]
    if len(posts) == 0:
        raise EmptyPosteriors("need at least one posterior vector")
    n = posts[0].size
    for p in posts:
        if p.shape != (n,):
            raise ValueError("posterior vectors must share one length")
        if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
            raise ValueError("posterior entries must lie in [0, 1]")
    top_n = min(params.top_n, n)
    selected = np.zeros(n, dtype=bool)
    for p in posts:
        # stable sort on (-score, index): equal scores keep the lower index
        order = np.argsort(-p, kind="stable")
        selected[order[:top_n]] = True
    means = np.mean(np.stack(posts), axis=0)
    diag = np.where(selected, means, params.floor_zeta)
    if support is None:
        support = _default_support(n, prefix="cat")
    kernel = _clamp_kernel(np.diag(diag))
    return GroundMetric(source=support, target=support, kernel=kernel)


def attribute_class_kernel(
    table: np.ndarray,
    source: Optional[Support] = None,
    target: Optional[Support] = None,
) -> GroundMetric:
    """Column-normalize a binary attribute/class table so that per class
    the attribute indicators sum to 1."""
    tab = np.asarray(table, dtype=float)
    if tab.ndim != 2:
        raise ValueError("table must be 2-D (attributes x classes)")
    if not np.all(np.isin(tab, (0.0, 1.0))):
        raise ValueError("table entries must be 0 or 1")
    colsums = tab.sum(axis=0)
    if np.any(colsums == 0):
        cols = np.nonzero(colsums == 0)[0].tolist()
        raise EmptyColumn(f"table columns {cols} have no nonzero entry")
    kernel = tab / colsums
    if source is None:
        source = _default_support(tab.shape[0], prefix="attr")
    if target is None:
        target = _default_support(tab.shape[1], prefix="class")
    return GroundMetric(source=source, target=target, kernel=_clamp_kernel(kernel))
