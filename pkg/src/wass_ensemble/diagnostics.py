"""Entropy, smoothness, and bound checks on ensemble outputs.

The checks quantify what the barycenter buys over plain averaging: the
output keeps a bounded distance to an oracle and to each model, loses no
smoothness in the embedding geometry, and gains entropy relative to the
weighted model average. Each check is reported as (name, lhs, rhs,
satisfied) with lhs <= rhs the asserted direction.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .barycenter import BarycenterResult
from .errors import MissingCouplings, MissingPoints, NotNormalized
from .ground_metric import GroundMetric, cost_from_embeddings
from .measures import EnsembleInput, Histogram, normalize
from .transport import exact_ot_2bin, sinkhorn_distance

# Exact-arithmetic bounds get the absolute tolerance only; checks that go
# through the regularized transport approximation add the relative term.
BOUND_ATOL = 1e-9
BOUND_RTOL = 1e-6


@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: float
    rhs: float
    satisfied: bool


@dataclass(frozen=True, eq=False)
class DiagnosticsReport:
    entropy: float
    smoothness_energy: Optional[float]
    per_model_entropies: np.ndarray
    bound_checks: tuple


def entropy(h: Histogram) -> float:
    """Shannon entropy -sum rho_i log rho_i in nats, with 0 log 0 := 0."""
    if abs(h.total - 1.0) > 1e-9:
        raise NotNormalized(f"entropy needs a normalized histogram, got total {h.total!r}")
    mass = h.mass
    pos = mass[mass > 0]
    return float(-np.sum(pos * np.log(pos)))


def coupling_entropy(matrix: np.ndarray) -> float:
    """-sum gamma_ij log gamma_ij with 0 log 0 := 0."""
    pos = matrix[matrix > 0]
    return float(-np.sum(pos * np.log(pos)))


def smoothness_energy(h: Histogram) -> float:
    """Interaction energy sum_ij ||x_i - x_j||^2 rho_i rho_j (full double
    sum, both orderings counted)."""
    if h.support.points is None:
        raise MissingPoints("smoothness energy needs support points")
    x = h.support.points
    diff = x[:, None, :] - x[None, :, :]
    sq = np.einsum("ijd,ijd->ij", diff, diff)
    return float(h.mass @ sq @ h.mass)


def _check(name: str, lhs: float, rhs: float, relative: bool) -> BoundCheck:
    tol = BOUND_ATOL + (BOUND_RTOL * abs(rhs) if relative else 0.0)
    return BoundCheck(name, lhs, rhs, lhs <= rhs + tol)


def _w2(a: Histogram, b: Histogram, gm: GroundMetric, ot_epsilon: float) -> tuple:
    """Squared-distance transport cost and the label of the path used."""
    if len(a) == 2:
        value, _ = exact_ot_2bin(a.mass, b.mass, gm.cost)
        return value, "exact"
    res = sinkhorn_distance(a, b, gm, ot_epsilon)
    return res.transport_cost, "sinkhorn"


def check_output_bounds(
    result: BarycenterResult,
    models: EnsembleInput,
    oracle: Optional[Histogram],
    ot_epsilon: float,
) -> DiagnosticsReport:
    """Accuracy, diversity, smoothness, and entropy bounds for a barycenter.

    Evaluates, with W^2 the (approximate or exact 2-bin) transport cost:

      accuracy    W2(p, oracle) <= 4 sum_l lambda_l W2(mu_l, oracle)
      diversity   W2(p, mu_k)   <= sum_{l != k} lambda_l W2(mu_l, mu_k)
      smoothness  E(p)          <= sum_l lambda_l E(mu_l)
      entropy     sum_l lambda_l H(mu_l) <= H(p)

    The accuracy check is skipped when no oracle is supplied. The
    transport-based checks are exact only for 2-bin instances; larger
    instances go through the regularized approximation and the check name
    records which path was used.
    """
    p = normalize(result.barycenter)
    lambdas = models.weights.lambdas
    mus = [normalize(h) for h in models.models]
    gm = models.kernels[0] if models.kernels else None
    if gm is None or gm.cost is None:
        # identity or graph kernels carry no cost; fall back to the
        # squared-distance geometry of the shared support
        if p.support.points is None:
            raise ValueError("bound checks need a cost matrix or support points")
        gm = cost_from_embeddings(p.support, p.support, normalize_vectors=False)

    checks = []
    if oracle is not None:
        w_po, path = _w2(p, oracle, gm, ot_epsilon)
        w_mo = [_w2(h, oracle, gm, ot_epsilon)[0] for h in mus]
        rhs = 4.0 * float(np.dot(lambdas, w_mo))
        checks.append(_check(f"accuracy[{path}]", w_po, rhs, path == "sinkhorn"))

    for k, mu_k in enumerate(mus):
        w_pk, path_k = _w2(p, mu_k, gm, ot_epsilon)
        rhs_k = 0.0
        for l, mu_l in enumerate(mus):
            if l == k:
                continue
            rhs_k += lambdas[l] * _w2(mu_l, mu_k, gm, ot_epsilon)[0]
        checks.append(
            _check(f"diversity_vs_model_{k}[{path_k}]", w_pk, rhs_k,
                   path_k == "sinkhorn")
        )

    e_p = None
    if p.support.points is not None:
        e_p = smoothness_energy(p)
        e_models = [smoothness_energy(h) for h in mus]
        checks.append(
            _check("smoothness", e_p, float(np.dot(lambdas, e_models)), False)
        )

    h_p = entropy(p)
    h_models = np.array([entropy(h) for h in mus])
    checks.append(_check("entropy", float(np.dot(lambdas, h_models)), h_p, False))

    return DiagnosticsReport(
        entropy=h_p,
        smoothness_energy=e_p,
        per_model_entropies=h_models,
        bound_checks=tuple(checks),
    )


def check_entropy_lemma(result: BarycenterResult) -> DiagnosticsReport:
    """Entropy budget of each coupling.

    For every model, H(p) + H(mu_l) must dominate the coupling entropy
    -sum gamma_ij log gamma_ij; larger regularization raises the right-hand
    side and with it the output entropy. Marginals are read off the
    couplings themselves, so the check is self-contained.
    """
    if result.couplings is None:
        raise MissingCouplings("run the solver with materialize_couplings=True")
    p = normalize(result.barycenter)
    h_p = entropy(p)
    checks = []
    per_model = []
    for l, coupling in enumerate(result.couplings):
        row = coupling.row_marginal()
        total = float(row.sum())
        if total <= 0:
            raise MissingCouplings(f"coupling {l} carries no mass")
        row = row / total
        h_mu = float(-np.sum(row[row > 0] * np.log(row[row > 0])))
        per_model.append(h_mu)
        lhs = coupling_entropy(coupling.matrix)
        checks.append(_check(f"coupling_entropy_model_{l}", lhs, h_p + h_mu, True))
    return DiagnosticsReport(
        entropy=h_p,
        smoothness_energy=None,
        per_model_entropies=np.array(per_model),
        bound_checks=tuple(checks),
    )
