"""Scaling solvers for balanced and unbalanced barycenters.

Both solvers iterate multiplicative updates against per-model kernels K_l:

  balanced      u_l <- mu_l / (K_l v_l)
                p    <- prod_l (K_l^T u_l)^lambda_l      (log-domain product)
                v_l <- p / (K_l^T u_l)

  unbalanced    u_l <- (mu_l / (K_l v_l))^(lam/(lam+eps))
                p    <- (sum_l lambda_l (K_l^T u_l)^(eps/(lam+eps)))^((lam+eps)/eps)
                v_l <- (p / (K_l^T u_l))^(lam/(lam+eps))

where lam is the marginal-relaxation strength of the unbalanced problem.
Each sweep runs the model updates in index order and reduces p with a fixed
summation order, so results are deterministic regardless of how callers
parallelize across instances.

Two numerical regimes need more than the plain updates:

* Small epsilon with dense costs: exp(-C/eps) underflows and, worse, the
  scaling vectors need ~C_max/eps sweeps to ramp up. The log-domain path
  therefore anneals epsilon down a geometric ladder (a standard warm-start
  for scaling iterations), finishing with plain sweeps at the target
  epsilon, whose fixed point is unchanged.
* Large lam/eps in the unbalanced solver: the iteration contracts at
  (lam/(lam+eps))^2 per sweep, so reaching the fixed point would take
  ~lam/eps sweeps. The log-domain path applies vector Aitken extrapolation
  to the scaling state every few sweeps, which collapses the single
  dominant slow mode while leaving the fixed point untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    DivisionUnderflow,
    ExponentOverflow,
    MissingCouplings,
    MissingKernels,
    NotNormalizedInput,
    ZeroColumn,
)
from .ground_metric import KERNEL_FLOOR, GroundMetric, kernel_from_cost
from .measures import NORMALIZATION_TOL, EnsembleInput, Histogram

# Division denominators are clamped here; kernel entries are already
# clamped at construction, so a zero denominator signals vanished mass.
DENOM_FLOOR = 1e-300
# At or below this epsilon, dense cost kernels underflow 64-bit floats and
# the solver switches to the annealed log-domain path (log_domain="auto").
LOG_DOMAIN_EPS = 1e-2
# Above this lam/eps ratio the unbalanced scaling vectors overflow the
# kernel-domain representation; switch to log domain and accelerate.
UNBALANCED_LOG_RATIO = 1e3

# Epsilon ladder for the annealed balanced path: start at cost_max/3,
# decay geometrically, spend a few sweeps per stage, then polish at the
# target. Fixed constants keep runs reproducible.
ANNEAL_START_FACTOR = 3.0
ANNEAL_DECAY = 0.8
ANNEAL_STAGE_SWEEPS = 8
ANNEAL_STAGE_TOL = 1e-8


@dataclass(frozen=True)
class SolverParams:
    """Knobs shared by both solvers.

    epsilon is required when kernels must be derived from costs or when the
    log-domain path needs -C/eps directly; kl_lambda only applies to the
    unbalanced solver. The sweep stops at max_iter or when the l1 change in
    p falls to `tolerance`; at very small epsilon that change understates
    the distance to the fixed point, so treat `converged` as "the stopping
    rule fired", not as an error certificate. log_domain picks the
    numerical path ("auto" switches on small epsilon or large
    kl_lambda/epsilon); accelerate=None lets the solver decide whether to
    extrapolate the unbalanced iteration.
    """

    epsilon: Optional[float] = None
    kl_lambda: Optional[float] = None
    max_iter: int = 5
    tolerance: float = 1e-9
    materialize_couplings: bool = False
    renormalize_output: bool = False
    log_domain: str = "auto"
    accelerate: Optional[bool] = None

    def __post_init__(self):
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.kl_lambda is not None and self.kl_lambda <= 0:
            raise ValueError("kl_lambda must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        if self.log_domain not in ("auto", "on", "off"):
            raise ValueError("log_domain must be 'auto', 'on' or 'off'")


@dataclass(frozen=True, eq=False)
class Coupling:
    """A nonnegative transport plan between one model and the barycenter."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        if np.any(mat < 0) or not np.all(np.isfinite(mat)):
            raise ValueError("coupling entries must be finite and >= 0")
        mat = mat.copy()
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def row_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    def column_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=0)


@dataclass(frozen=True, eq=False)
class BarycenterResult:
    barycenter: Histogram
    couplings: Optional[tuple]
    iterations_run: int
    final_residual: float
    converged: bool


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    amax = np.max(a, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(np.sum(np.exp(a - safe), axis=axis)) + np.squeeze(safe, axis=axis)
    return out


def _log_kernel_matrix(gm: GroundMetric, eps: Optional[float]) -> np.ndarray:
    """Log kernel for the stabilized paths.

    Cost-backed kernels use -C/eps directly (dense, finite). Directly built
    kernels treat clamp-floor entries as conceptual zeros (-inf), so that
    e.g. an identity kernel stays an exact identity even when the scaling
    vectors exceed the 1/floor dynamic range.
    """
    if gm.cost is not None and eps is not None:
        return -gm.cost / eps
    kernel = gm.kernel
    with np.errstate(divide="ignore"):
        log_k = np.log(kernel)
    return np.where(kernel <= KERNEL_FLOOR, -np.inf, log_k)


def _log_div(num: np.ndarray, den: np.ndarray, context: str,
             allow_posinf: bool = False) -> np.ndarray:
    """log(num/den) from logs, with the kernel path's zero semantics:
    0/0 -> 0 (the -inf - -inf indeterminate collapses to -inf)."""
    with np.errstate(invalid="ignore"):
        out = num - den
    nan = np.isnan(out)
    if np.any(nan):
        out = np.where(nan & np.isneginf(num), -np.inf, out)
        if np.any(np.isnan(out)):
            raise DivisionUnderflow(context)
    if not allow_posinf and np.any(np.isposinf(out)):
        raise DivisionUnderflow(context)
    return out


# Sweeps fast-forwarded when an iteration degenerates to a translation.
RAMP_JUMP = 512


def _extrapolate(x0: np.ndarray, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Per-coordinate Aitken step over three consecutive scaling states,
    with a fixed fast-forward along exact ramps (increments equal at float
    precision). Both stalls leave the fixed point untouched: the scaling
    iterations converge from any positive initialization, so extrapolated
    states are legal warm restarts."""
    with np.errstate(invalid="ignore", over="ignore"):
        d1 = x1 - x0
        d2 = x2 - x1
        den = d2 - d1
        finite = np.isfinite(d1) & np.isfinite(d2)
        ramp = finite & (np.abs(den) <= 1e-10 * np.maximum(np.abs(d1), np.abs(d2)))
        contracting = finite & ~ramp & (np.abs(den) > 1e-30)
        step = np.where(
            contracting, d2 * d2 / np.where(contracting, den, 1.0), 0.0
        )
        step = np.where(ramp, -RAMP_JUMP * d2, step)
    return x2 - step


def _resolve_kernels(ens: EnsembleInput, params: SolverParams) -> list:
    if ens.kernels is None:
        raise MissingKernels("barycenter solvers need one kernel per model")
    out = []
    for gm in ens.kernels:
        if gm.kernel is None:
            if params.epsilon is None:
                raise ValueError("epsilon is required to derive kernels from costs")
            gm = kernel_from_cost(gm, params.epsilon)
        out.append(gm)
    return out


def _effective_epsilon(gms, params: SolverParams) -> Optional[float]:
    for gm in gms:
        if gm.epsilon is not None:
            return gm.epsilon
    return params.epsilon


def _result(
    target,
    p: np.ndarray,
    couplings,
    iterations: int,
    residual: float,
    converged: bool,
    renormalize: bool,
) -> BarycenterResult:
    if renormalize:
        total = p.sum()
        if total <= 0:
            raise DivisionUnderflow("cannot renormalize a zero-mass barycenter")
        p = p / total
        hist = Histogram(target, p, normalized=True)
    else:
        hist = Histogram(
            target, p, normalized=abs(float(p.sum()) - 1.0) <= NORMALIZATION_TOL
        )
    return BarycenterResult(
        barycenter=hist,
        couplings=couplings,
        iterations_run=iterations,
        final_residual=residual,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# Balanced solver
# ---------------------------------------------------------------------------

def balanced_barycenter(ens: EnsembleInput, params: SolverParams) -> BarycenterResult:
    """Consensus of normalized histograms under entropic-regularized
    transport.

    With every kernel equal to the identity, the fixed point is exactly the
    weighted geometric mean of the inputs; informative kernels spread the
    consensus mass across semantically close bins instead.
    """
    gms = _resolve_kernels(ens, params)
    for l, h in enumerate(ens.models):
        if np.any(h.mass < 0) or not np.all(np.isfinite(h.mass)):
            raise NotNormalizedInput(f"model {l} mass must be finite and >= 0")
        if abs(h.total - 1.0) > NORMALIZATION_TOL:
            raise NotNormalizedInput(
                f"model {l} mass sums to {h.total!r}; the balanced solver needs 1"
            )
    use_log = params.log_domain == "on"
    if params.log_domain == "auto":
        eps = _effective_epsilon(gms, params)
        use_log = (
            eps is not None
            and eps <= LOG_DOMAIN_EPS
            and all(gm.cost is not None for gm in gms)
        )
    if use_log:
        return _balanced_log(ens, gms, params)
    return _balanced_kernel(ens, gms, params)


def _balanced_kernel(ens, gms, params) -> BarycenterResult:
    m = ens.m
    kernels = [gm.kernel for gm in gms]
    mus = [h.mass for h in ens.models]
    lambdas = ens.weights.lambdas
    target = gms[0].target
    M = len(target)
    v = [np.ones(M) for _ in range(m)]
    u = [None] * m
    s = [None] * m
    p_prev = None
    p = None
    residual = math.inf
    converged = False
    iterations = 0
    for _ in range(params.max_iter):
        log_p = np.zeros(M)
        for l in range(m):
            kv = kernels[l] @ v[l]
            if not np.all(kv > 0) or not np.all(np.isfinite(kv)):
                raise DivisionUnderflow(f"K v for model {l} lost positivity")
            u[l] = mus[l] / np.maximum(kv, DENOM_FLOOR)
            s_l = kernels[l].T @ u[l]
            if not np.all(s_l > 0) or not np.all(np.isfinite(s_l)):
                raise DivisionUnderflow(f"K^T u for model {l} lost positivity")
            s[l] = s_l
            log_p = log_p + lambdas[l] * np.log(s_l)
        p = np.exp(log_p)
        if not np.all(np.isfinite(p)):
            raise DivisionUnderflow("barycenter update produced non-finite mass")
        for l in range(m):
            v[l] = p / np.maximum(s[l], DENOM_FLOOR)
        iterations += 1
        if p_prev is not None:
            residual = float(np.sum(np.abs(p - p_prev)))
            if residual <= params.tolerance:
                converged = True
                break
        p_prev = p
    couplings = None
    if params.materialize_couplings:
        couplings = tuple(
            Coupling(u[l][:, None] * kernels[l] * v[l][None, :]) for l in range(m)
        )
    return _result(target, p, couplings, iterations, residual, converged,
                   params.renormalize_output)


def _balanced_log(ens, gms, params) -> BarycenterResult:
    """Annealed log-domain path for small epsilon.

    State is the per-model potential g_l = eps*log(v_l), which is stable
    across epsilon stages; each stage runs a few sweeps at its epsilon,
    then the ladder steps down geometrically until the target, where the
    residual stopping rule applies. Homogeneous model shapes take a stacked
    fast path; mixed source sizes fall back to a per-model loop.
    """
    m = ens.m
    target = gms[0].target
    M = len(target)
    lambdas = ens.weights.lambdas

    eps_target = _effective_epsilon(gms, params)
    costs = [gm.cost for gm in gms]
    anneal = eps_target is not None and all(c is not None for c in costs)
    if anneal:
        cost_max = max(float(np.max(c)) for c in costs)
        eps0 = max(eps_target, cost_max / ANNEAL_START_FACTOR)
    else:
        eps_target = 1.0  # only used as the potential scale
        eps0 = eps_target

    stacked = len({gm.shape for gm in gms}) == 1
    with np.errstate(divide="ignore"):
        if stacked:
            log_mu = np.log(np.stack([h.mass for h in ens.models]))   # (m, N)
        else:
            log_mu = [np.log(h.mass) for h in ens.models]
        if not anneal:
            fixed = [_log_kernel_matrix(gm, eps_target) for gm in gms]
            fixed_log_k = np.stack(fixed) if stacked else fixed

    if stacked and anneal:
        cost_arr = np.stack(costs)                                    # (m, N, M)
    lam_col = lambdas[:, None]
    log_u = None
    log_s = None
    g = np.zeros((m, M)) if stacked else [np.zeros(M) for _ in range(m)]

    def log_kernels(eps):
        if not anneal:
            return fixed_log_k
        if stacked:
            return -cost_arr / eps
        return [-c / eps for c in costs]

    # Cost-backed ladders keep every log quantity NaN-free (the kernel log
    # is finite and at least one bin of each model carries mass), so the
    # annealed hot path skips the indeterminate-form guards.
    def sweep_stacked_fast(g, eps, log_k):
        nonlocal log_u, log_s
        a = log_k + (g / eps)[:, None, :]
        amax = a.max(axis=2)
        log_kv = np.log(np.exp(a - amax[:, :, None]).sum(axis=2)) + amax
        log_u = log_mu - log_kv
        b = log_k + log_u[:, :, None]
        bmax = b.max(axis=1)
        log_s = np.log(np.exp(b - bmax[:, None, :]).sum(axis=1)) + bmax
        log_p = np.sum(lam_col * log_s, axis=0)
        return (log_p[None, :] - log_s) * eps, np.exp(log_p)

    def sweep_stacked_checked(g, eps, log_k):
        nonlocal log_u, log_s
        log_v = g / eps                                               # (m, M)
        log_kv = _logsumexp(log_k + log_v[:, None, :], axis=2)        # (m, N)
        if np.any(np.isnan(log_kv)):
            raise DivisionUnderflow("K v lost positivity in log domain")
        log_u = _log_div(log_mu, log_kv, "K v lost positivity in log domain")
        log_s = _logsumexp(log_k + log_u[:, :, None], axis=1)         # (m, M)
        if np.any(np.isnan(log_s)):
            raise DivisionUnderflow("K^T u lost positivity in log domain")
        with np.errstate(invalid="ignore"):
            log_p = np.sum(lam_col * log_s, axis=0)
        log_v_new = _log_div(log_p[None, :], log_s, "barycenter lost positivity")
        return log_v_new * eps, np.exp(log_p)

    def sweep_list(g, eps, log_k):
        nonlocal log_u, log_s
        log_u = [None] * m
        log_s = [None] * m
        log_p = np.zeros(M)
        for l in range(m):
            log_kv = _logsumexp(log_k[l] + (g[l] / eps)[None, :], axis=1)
            if np.any(np.isnan(log_kv)):
                raise DivisionUnderflow(f"K v for model {l} lost positivity")
            log_u[l] = _log_div(log_mu[l], log_kv,
                                f"K v for model {l} lost positivity")
            ls = _logsumexp(log_k[l] + log_u[l][:, None], axis=0)
            if np.any(np.isnan(ls)):
                raise DivisionUnderflow(f"K^T u for model {l} lost positivity")
            log_s[l] = ls
            with np.errstate(invalid="ignore"):
                log_p = log_p + lambdas[l] * ls
        return (
            [_log_div(log_p, log_s[l], "barycenter lost positivity") * eps
             for l in range(m)],
            np.exp(log_p),
        )

    if not stacked:
        sweep = sweep_list
    elif anneal:
        sweep = sweep_stacked_fast
    else:
        sweep = sweep_stacked_checked

    if stacked:
        def pack(state):
            return state.ravel()

        def unpack(flat):
            return flat.reshape(m, M)
    else:
        def pack(state):
            return np.concatenate(state)

        def unpack(flat):
            return [flat[l * M:(l + 1) * M] for l in range(m)]

    eps = eps0
    sweeps = 0
    p = None
    residual = math.inf
    converged = False

    # ladder phase: step epsilon down geometrically, a few sweeps per stage
    while anneal and eps > eps_target and sweeps < params.max_iter:
        log_k = log_kernels(eps)
        stage_prev = None
        for _ in range(ANNEAL_STAGE_SWEEPS):
            if sweeps >= params.max_iter:
                break
            g, p = sweep(g, eps, log_k)
            sweeps += 1
            if (
                stage_prev is not None
                and float(np.sum(np.abs(p - stage_prev))) <= ANNEAL_STAGE_TOL
            ):
                break
            stage_prev = p
        eps = max(eps_target, eps * ANNEAL_DECAY)

    # polish phase at the target epsilon, with extrapolated rounds; the
    # residual compares two consecutive plain sweeps
    eps = eps_target if anneal else eps0
    log_k = log_kernels(eps)
    while sweeps < params.max_iter:
        x0 = pack(g)
        g, p = sweep(g, eps, log_k)
        sweeps += 1
        if sweeps >= params.max_iter:
            break
        p_plain = p
        x1 = pack(g)
        g, p = sweep(g, eps, log_k)
        sweeps += 1
        residual = float(np.sum(np.abs(p - p_plain)))
        if residual <= params.tolerance:
            converged = True
            break
        if sweeps < params.max_iter:
            x2 = pack(g)
            g = unpack(_extrapolate(x0, x1, x2))
            g, p = sweep(g, eps, log_k)
            sweeps += 1

    if p is None or not np.all(np.isfinite(p)):
        raise DivisionUnderflow("barycenter update produced non-finite mass")
    couplings = None
    if params.materialize_couplings:
        final_log_k = log_kernels(eps)
        couplings = tuple(
            Coupling(np.exp(
                log_u[l][:, None] + final_log_k[l] + (g[l] / eps)[None, :]
            ))
            for l in range(m)
        )
    return _result(target, p, couplings, sweeps, residual, converged,
                   params.renormalize_output)


# ---------------------------------------------------------------------------
# Unbalanced solver
# ---------------------------------------------------------------------------

def unbalanced_barycenter(ens: EnsembleInput, params: SolverParams) -> BarycenterResult:
    """Consensus of unnormalized score vectors with KL-relaxed marginals.

    Requires params.kl_lambda (the relaxation strength) and epsilon. As
    kl_lambda/epsilon grows with identity kernels, the output approaches the
    measure whose square root is the weighted mean of the inputs' square
    roots; the log-domain path reaches that regime via Aitken extrapolation
    of the scaling state.
    """
    if params.kl_lambda is None:
        raise ValueError("unbalanced_barycenter requires params.kl_lambda")
    gms = _resolve_kernels(ens, params)
    eps = _effective_epsilon(gms, params)
    if eps is None:
        raise ValueError("unbalanced_barycenter requires an epsilon")
    for l, h in enumerate(ens.models):
        if np.any(h.mass < 0) or not np.all(np.isfinite(h.mass)):
            raise ValueError(f"model {l} mass must be finite and >= 0")
    lam = params.kl_lambda
    ratio = lam / eps
    if not math.isfinite((lam + eps) / eps):
        raise ExponentOverflow("(kl_lambda + epsilon)/epsilon is not representable")

    use_log = params.log_domain == "on"
    if params.log_domain == "auto":
        use_log = ratio >= UNBALANCED_LOG_RATIO or (
            eps <= LOG_DOMAIN_EPS and all(gm.cost is not None for gm in gms)
        )
    if use_log:
        accelerate = params.accelerate if params.accelerate is not None else True
        return _unbalanced_log(ens, gms, eps, lam, accelerate, params)
    return _unbalanced_kernel(ens, gms, eps, lam, params)


def _unbalanced_kernel(ens, gms, eps, lam, params) -> BarycenterResult:
    frac_u = lam / (lam + eps)        # marginal-relaxation exponent
    frac_p = eps / (lam + eps)
    inv_frac_p = (lam + eps) / eps
    m = ens.m
    kernels = [gm.kernel for gm in gms]
    mus = [h.mass for h in ens.models]
    lambdas = ens.weights.lambdas
    target = gms[0].target
    M = len(target)
    v = [np.ones(M) for _ in range(m)]
    u = [None] * m
    s = [None] * m
    p_prev = None
    p = None
    residual = math.inf
    converged = False
    iterations = 0
    for _ in range(params.max_iter):
        base = np.zeros(M)
        for l in range(m):
            kv = kernels[l] @ v[l]
            if np.any(kv < 0) or not np.all(np.isfinite(kv)):
                raise DivisionUnderflow(f"K v for model {l} lost positivity")
            u[l] = (mus[l] / np.maximum(kv, DENOM_FLOOR)) ** frac_u
            s_l = kernels[l].T @ u[l]
            if np.any(s_l < 0) or not np.all(np.isfinite(s_l)):
                raise DivisionUnderflow(f"K^T u for model {l} lost positivity")
            s[l] = s_l
            base = base + lambdas[l] * s_l ** frac_p
        p = base ** inv_frac_p
        if not np.all(np.isfinite(p)):
            raise ExponentOverflow(
                "barycenter power overflowed; epsilon is too small for kl_lambda"
            )
        if not np.any(p > 0):
            raise DivisionUnderflow("barycenter mass vanished to zero")
        for l in range(m):
            v[l] = (p / np.maximum(s[l], DENOM_FLOOR)) ** frac_u
        iterations += 1
        if p_prev is not None:
            residual = float(np.sum(np.abs(p - p_prev)))
            if residual <= params.tolerance:
                converged = True
                break
        p_prev = p
    couplings = None
    if params.materialize_couplings:
        couplings = tuple(
            Coupling(u[l][:, None] * kernels[l] * v[l][None, :]) for l in range(m)
        )
    return _result(target, p, couplings, iterations, residual, converged,
                   params.renormalize_output)


def _unbalanced_log(ens, gms, eps, lam, accelerate, params) -> BarycenterResult:
    """Log-domain unbalanced path with optional Aitken extrapolation.

    The state is log(v) per model. Every third sweep the per-coordinate
    Aitken step x2 - (dx2)^2/(dx2 - dx1) replaces the state; the map's slow
    modes share one contraction ratio, so the extrapolation lands near the
    fixed point that plain sweeps approach at rate (lam/(lam+eps))^2.
    """
    frac_u = lam / (lam + eps)
    frac_p = eps / (lam + eps)
    inv_frac_p = (lam + eps) / eps
    m = ens.m
    target = gms[0].target
    M = len(target)
    lambdas = ens.weights.lambdas
    with np.errstate(divide="ignore"):
        log_mu = [np.log(h.mass) for h in ens.models]
        log_lam = np.log(lambdas)
    log_k = [_log_kernel_matrix(gm, eps) for gm in gms]

    log_v = [np.zeros(M) for _ in range(m)]
    log_u = [None] * m
    log_s = [None] * m

    def sweep(state):
        nonlocal log_u, log_s
        parts = np.empty((m, M))
        for l in range(m):
            log_kv = _logsumexp(log_k[l] + state[l][None, :], axis=1)
            if np.any(np.isnan(log_kv)):
                raise DivisionUnderflow(f"K v for model {l} lost positivity")
            log_u[l] = frac_u * _log_div(
                log_mu[l], log_kv, f"K v for model {l} lost positivity"
            )
            ls = _logsumexp(log_k[l] + log_u[l][:, None], axis=0)
            if np.any(np.isnan(ls)):
                raise DivisionUnderflow(f"K^T u for model {l} lost positivity")
            log_s[l] = ls
            with np.errstate(invalid="ignore"):
                parts[l] = log_lam[l] + frac_p * ls
        log_p = inv_frac_p * _logsumexp(parts, axis=0)
        new_state = [
            frac_u * _log_div(log_p, log_s[l], "barycenter lost positivity",
                              allow_posinf=True)
            for l in range(m)
        ]
        return new_state, log_p

    def aitken(x0, x1, x2):
        with np.errstate(invalid="ignore", over="ignore"):
            d1 = x1 - x0
            d2 = x2 - x1
            den = d2 - d1
            safe = np.isfinite(d1) & np.isfinite(d2) & (np.abs(den) > 1e-30)
            step = np.where(safe, d2 * d2 / np.where(safe, den, 1.0), 0.0)
        return x2 - step

    sweeps = 0
    log_p = None
    residual = math.inf
    converged = False
    while sweeps < params.max_iter:
        x0 = np.concatenate(log_v)
        log_v, log_p = sweep(log_v)
        sweeps += 1
        if sweeps >= params.max_iter:
            break
        # convergence is judged on two consecutive plain sweeps; the
        # extrapolation jump between rounds is not a map application
        with np.errstate(over="ignore", invalid="ignore"):
            p_plain = np.exp(log_p)
        x1 = np.concatenate(log_v)
        log_v, log_p = sweep(log_v)
        sweeps += 1
        with np.errstate(over="ignore", invalid="ignore"):
            residual = float(np.sum(np.abs(np.exp(log_p) - p_plain)))
        if residual <= params.tolerance:
            converged = True
            break
        if accelerate and sweeps < params.max_iter:
            x2 = np.concatenate(log_v)
            ext = aitken(x0, x1, x2)
            log_v = [ext[l * M:(l + 1) * M] for l in range(m)]
            log_v, log_p = sweep(log_v)   # stabilizing sweep keeps state coherent
            sweeps += 1
    if np.all(np.isneginf(log_p)):
        raise DivisionUnderflow("barycenter mass vanished to zero")
    p = np.exp(log_p)
    if not np.all(np.isfinite(p)):
        raise ExponentOverflow(
            "barycenter power overflowed; epsilon is too small for kl_lambda"
        )
    couplings = None
    if params.materialize_couplings:
        couplings = tuple(
            Coupling(np.exp(log_u[l][:, None] + log_k[l] + log_v[l][None, :]))
            for l in range(m)
        )
    return _result(target, p, couplings, sweeps, residual, converged,
                   params.renormalize_output)


def attribute_sources(result: BarycenterResult, target_bin: int) -> list:
    """Per-model contribution shares for one barycenter bin.

    Returns, for each model, the coupling column of `target_bin` normalized
    to sum 1: how much each source bin fed that output bin.
    """
    if result.couplings is None:
        raise MissingCouplings("run the solver with materialize_couplings=True")
    shares = []
    for l, coupling in enumerate(result.couplings):
        col = coupling.matrix[:, target_bin]
        total = float(col.sum())
        if total <= 0:
            raise ZeroColumn(
                f"coupling column {target_bin} of model {l} carries no mass"
            )
        shares.append(col / total)
    return shares
