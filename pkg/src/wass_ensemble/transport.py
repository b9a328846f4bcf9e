"""Regularized transport distances and exact small-instance oracles.

The scaling distance approximates the transport cost between two normalized
histograms; the 2-bin routines solve the same problems in closed form (the
coupling has a single free parameter there) and anchor the test suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .barycenter import (
    DENOM_FLOOR,
    LOG_DOMAIN_EPS,
    Coupling,
    _extrapolate,
    _logsumexp,
)
from .errors import DivisionUnderflow
from .ground_metric import GroundMetric
from .measures import Histogram


@dataclass(frozen=True, eq=False)
class OTResult:
    transport_cost: float
    coupling: Coupling
    iterations: int
    converged: bool


def sinkhorn_distance(
    p: Histogram,
    q: Histogram,
    gm: GroundMetric,
    epsilon: float,
    max_iter: int = 1000,
    tol: float = 1e-9,
) -> OTResult:
    """Entropic-regularized transport cost <C, gamma> between p and q.

    Alternates u <- p/(K v), v <- q/(K^T u) and reports the primal cost of
    the resulting plan (the entropy term is excluded). Falls back to
    log-domain arithmetic for small epsilon, where exp(-C/eps) underflows.
    If the row-marginal residual still exceeds `tol` at max_iter the result
    is returned with converged=False.
    """
    if gm.cost is None:
        raise ValueError("sinkhorn_distance needs a cost matrix")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    a = p.mass
    b = q.mass
    if abs(a.sum() - 1.0) > 1e-9 or abs(b.sum() - 1.0) > 1e-9:
        raise ValueError("sinkhorn_distance expects normalized histograms")
    cost = gm.cost
    if epsilon <= LOG_DOMAIN_EPS:
        return _sinkhorn_log(a, b, cost, epsilon, max_iter, tol)
    return _sinkhorn_kernel(a, b, cost, epsilon, max_iter, tol)


def _sinkhorn_kernel(a, b, cost, epsilon, max_iter, tol) -> OTResult:
    kernel = np.maximum(np.exp(-cost / epsilon), DENOM_FLOOR)
    v = np.ones_like(b)
    u = np.ones_like(a)
    converged = False
    iterations = 0
    for _ in range(max_iter):
        kv = kernel @ v
        if not np.all(kv > 0) or not np.all(np.isfinite(kv)):
            raise DivisionUnderflow("K v lost positivity")
        u = a / np.maximum(kv, DENOM_FLOOR)
        ktu = kernel.T @ u
        if not np.all(ktu > 0) or not np.all(np.isfinite(ktu)):
            raise DivisionUnderflow("K^T u lost positivity")
        v = b / np.maximum(ktu, DENOM_FLOOR)
        iterations += 1
        residual = float(np.sum(np.abs(u * (kernel @ v) - a)))
        if residual <= tol:
            converged = True
            break
    plan = u[:, None] * kernel * v[None, :]
    value = float(np.sum(plan * cost))
    return OTResult(value, Coupling(plan), iterations, converged)


def _sinkhorn_log(a, b, cost, epsilon, max_iter, tol) -> OTResult:
    """Annealed log-domain scaling for small epsilon.

    An epsilon ladder warm-starts the potentials (mirroring the barycenter
    solver's path); at the target epsilon the iteration is polished with
    extrapolated rounds. The alternating updates there stall in two
    characteristic ways, each with its cure:

    * frozen contraction (consecutive increments shrink geometrically):
      per-coordinate Aitken extrapolation jumps to the limit;
    * frozen ramp (increments exactly equal at 64-bit precision): the state
      is translated a fixed number of sweeps along the ramp, which is a
      legal warm restart since the iteration converges from any positive
      initialization.

    Convergence is certified only by the row-marginal residual.
    """
    from .barycenter import (
        ANNEAL_DECAY,
        ANNEAL_STAGE_SWEEPS,
        ANNEAL_START_FACTOR,
    )

    with np.errstate(divide="ignore"):
        log_a = np.log(a)
        log_b = np.log(b)

    def sweep(log_v, log_k):
        log_kv = _logsumexp(log_k + log_v[None, :], axis=1)
        log_u = log_a - log_kv
        log_ktu = _logsumexp(log_k + log_u[:, None], axis=0)
        return log_u, log_b - log_ktu

    g = np.zeros_like(b)   # eps * log_v, stable across ladder stages
    eps = max(epsilon, float(np.max(cost)) / ANNEAL_START_FACTOR)
    iterations = 0
    log_u = np.zeros_like(a)
    log_v = g
    while eps > epsilon and iterations < max_iter:
        log_k = -cost / eps
        log_v = g / eps
        for _ in range(ANNEAL_STAGE_SWEEPS):
            if iterations >= max_iter:
                break
            log_u, log_v = sweep(log_v, log_k)
            iterations += 1
        g = log_v * eps
        eps = max(epsilon, eps * ANNEAL_DECAY)

    log_k = -cost / epsilon
    log_v = g / epsilon
    converged = False
    while iterations < max_iter:
        x0 = log_v
        log_u, log_v = sweep(log_v, log_k)
        iterations += 1
        if iterations >= max_iter:
            break
        x1 = log_v
        log_u, log_v = sweep(log_v, log_k)
        iterations += 1
        row = np.exp(log_u + _logsumexp(log_k + log_v[None, :], axis=1))
        residual = float(np.sum(np.abs(row - a)))
        if residual <= tol:
            converged = True
            break
        if iterations < max_iter:
            log_v = _extrapolate(x0, x1, log_v)
            log_u, log_v = sweep(log_v, log_k)
            iterations += 1
    plan = np.exp(log_u[:, None] + log_k + log_v[None, :])
    value = float(np.sum(plan * cost))
    return OTResult(value, Coupling(plan), iterations, converged)


def exact_ot_2bin(p, q, cost) -> tuple:
    """Exact transport between two 2-bin histograms.

    The coupling has one free parameter g = gamma_11 on the interval
    [max(0, p1+q1-1), min(p1, q1)]; the objective is linear in g, so the
    optimum sits at an endpoint. Returns (cost value, 2x2 coupling).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    c = np.asarray(cost, dtype=float)
    lo = max(0.0, p[0] + q[0] - 1.0)
    hi = min(p[0], q[0])
    # d(cost)/dg: moving a unit of mass onto the diagonal
    slope = c[0, 0] - c[0, 1] - c[1, 0] + c[1, 1]
    g = lo if slope > 0 else hi
    plan = np.array(
        [[g, p[0] - g], [q[0] - g, 1.0 - p[0] - q[0] + g]]
    )
    plan = np.maximum(plan, 0.0)  # clip -0.0 / rounding dust at the edges
    value = float(np.sum(plan * c))
    return value, plan


def exact_barycenter_2bin(mus, lambdas, cost, grid: int = 100_000) -> np.ndarray:
    """Grid-search barycenter of 2-bin histograms under the exact distance.

    Scans rho_1 over {0, 1/grid, ..., 1} and returns the minimizer of
    sum_l lambda_l * exact_ot_2bin(rho, mu_l); ties break toward the
    smallest rho_1. Invariant to uniform scaling of the cost matrix.
    """
    c = np.asarray(cost, dtype=float)
    lams = np.asarray(lambdas, dtype=float)
    rho1 = np.linspace(0.0, 1.0, grid + 1)
    objective = np.zeros_like(rho1)
    for lam, mu in zip(lams, mus):
        mu = np.asarray(mu, dtype=float)
        g = np.minimum(rho1, mu[0])
        slope = c[0, 0] - c[0, 1] - c[1, 0] + c[1, 1]
        if slope > 0:
            g = np.maximum(0.0, rho1 + mu[0] - 1.0)
        cost_l = (
            c[0, 0] * g
            + c[0, 1] * (rho1 - g)
            + c[1, 0] * (mu[0] - g)
            + c[1, 1] * (1.0 - rho1 - mu[0] + g)
        )
        objective += lam * cost_l
    best = int(np.argmin(objective))  # first minimum = smallest rho_1
    return np.array([rho1[best], 1.0 - rho1[best]])
