"""Command line front end.

Subcommands:

  ensemble   means and barycenters over histogram CSV files
  diagnose   bound checks (accuracy/diversity/smoothness/entropy) on a run
  oracle     exact 2-bin transport and barycenter values
  bench      per-instance wall-time harness for the balanced solver
  shuffle    seeded semantic perturbation of input histograms

Exit codes: 0 success, 1 bad configuration, 2 unreadable or malformed
input, 3 solver failure (the error name is printed to stderr). Output JSON
is byte-stable: fixed key order, 17-significant-digit floats, and ordered
assembly when inputs are processed by parallel workers.
"""
from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import io
from .barycenter import (
    SolverParams,
    attribute_sources,
    balanced_barycenter,
    unbalanced_barycenter,
)
from .diagnostics import check_entropy_lemma, check_output_bounds, entropy, smoothness_energy
from .errors import InputFormatError, WassEnsembleError
from .frechet import MeanOptions, arithmetic_mean, geometric_mean, performance_weights
from .ground_metric import (
    DiagonalKernelParams,
    cost_from_embeddings,
    diagonal_topn_kernel,
    kernel_from_cost,
)
from .measures import EnsembleInput, EnsembleWeights, Histogram, normalize
from .pipelines import semantic_shuffle
from .transport import exact_barycenter_2bin, exact_ot_2bin

SCHEMA = "wass-ensemble/1"
MODES = ("balanced", "unbalanced", "arithmetic", "geometric")


class _ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 instead of argparse's default 2
        raise _ConfigError(message)


@dataclass(frozen=True)
class RunConfig:
    mode: str
    epsilon: Optional[float]
    kl_lambda: Optional[float]
    max_iter: int
    tolerance: float
    weights: Optional[str]
    top_n: Optional[int]
    zeta: Optional[float]
    seed: Optional[int]
    inputs: tuple
    kernel: Optional[str]
    embeddings: Optional[str]
    out: Optional[str]
    emit_couplings: bool
    attribute_bin: Optional[str]
    workers: int
    raw_embeddings: bool = False


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--kl-lambda", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=5)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--weights", default="uniform",
                   help="'uniform', a comma list, or perf:<scores-file>")
    p.add_argument("--top-n", type=int, default=None)
    p.add_argument("--zeta", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--kernel", default=None, help="kernel/cost CSV file")
    p.add_argument("--embeddings", default=None, help="label,v1,...,vd CSV file")
    p.add_argument("--raw-embeddings", action="store_true",
                   help="skip unit-normalization of embedding vectors")
    p.add_argument("--out", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wass-ensemble", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("ensemble", help="compute a mean or barycenter")
    pe.add_argument("--mode", choices=MODES, required=True)
    pe.add_argument("--inputs", nargs="+", required=True)
    pe.add_argument("--emit-couplings", action="store_true")
    pe.add_argument("--attribute-bin", default=None,
                    help="emit per-model source attributions for this bin label")
    pe.add_argument("--workers", type=int, default=1)
    _add_common(pe)

    pd = sub.add_parser("diagnose", help="bound checks for a solver run")
    pd.add_argument("--mode", choices=("balanced", "unbalanced"), default="balanced")
    pd.add_argument("--inputs", required=True)
    pd.add_argument("--oracle", default=None, help="histogram CSV with one row")
    pd.add_argument("--ot-epsilon", type=float, default=0.01,
                    help="regularization for the transport-cost checks")
    _add_common(pd)

    po = sub.add_parser("oracle", help="exact 2-bin computations")
    po.add_argument("--op", choices=("ot", "barycenter"), required=True)
    po.add_argument("--p", default=None, help="comma pair, e.g. 0.7,0.3")
    po.add_argument("--q", default=None)
    po.add_argument("--cost", default="0,1,1,0", help="row-major 2x2 cost")
    po.add_argument("--inputs", default=None, help="2-bin histogram CSV (barycenter op)")
    po.add_argument("--weights", default="uniform")
    po.add_argument("--out", default=None)

    pb = sub.add_parser("bench", help="time the balanced solver")
    pb.add_argument("--models", type=int, default=8)
    pb.add_argument("--bins", type=int, default=80)
    pb.add_argument("--instances", type=int, default=100)
    pb.add_argument("--epsilon", type=float, default=1.0)
    pb.add_argument("--max-iter", type=int, default=5)
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--out", default=None)

    ps = sub.add_parser("shuffle", help="shuffle mass within kernel clusters")
    ps.add_argument("--inputs", required=True)
    _add_common(ps)

    return parser


def _parse_weights(spec: Optional[str], m: int) -> EnsembleWeights:
    if spec is None or spec == "uniform":
        return EnsembleWeights.uniform(m)
    if spec.startswith("perf:"):
        return performance_weights(io.read_scores(spec[len("perf:"):]))
    try:
        values = np.array([float(x) for x in spec.split(",")])
    except ValueError as exc:
        raise _ConfigError(f"bad --weights value {spec!r}") from exc
    return EnsembleWeights(values)


def _resolve_support(cfg, support):
    """Attach embedding points to the input labels when --embeddings is given."""
    if cfg.embeddings is None:
        return support
    return io.align_embeddings(support, io.read_embeddings(cfg.embeddings))


def _load_kernel(cfg, support, n_models):
    """Resolve per-model kernels from --kernel / --embeddings / --top-n."""
    if cfg.kernel is not None:
        gm = io.read_matrix_file(cfg.kernel, support, epsilon=cfg.epsilon)
        return (gm,) * n_models
    if cfg.embeddings is not None:
        gm = cost_from_embeddings(
            support, support, normalize_vectors=not cfg.raw_embeddings
        )
        if cfg.epsilon is not None:
            gm = kernel_from_cost(gm, cfg.epsilon)
        return (gm,) * n_models
    return None


def _solve(cfg: RunConfig, masses, support, weights):
    params = SolverParams(
        epsilon=cfg.epsilon,
        kl_lambda=cfg.kl_lambda,
        max_iter=cfg.max_iter,
        tolerance=cfg.tolerance,
        materialize_couplings=cfg.emit_couplings or cfg.attribute_bin is not None,
    )
    support = _resolve_support(cfg, support)
    if cfg.mode in ("arithmetic", "geometric"):
        models = tuple(Histogram(support, m) for m in masses)
        ens = EnsembleInput(models=models, weights=weights)
        mean = arithmetic_mean(ens) if cfg.mode == "arithmetic" else geometric_mean(
            ens, MeanOptions()
        )
        return ens, None, mean, None
    normalized_flag = all(abs(m.sum() - 1.0) <= 1e-9 for m in masses)
    models = tuple(Histogram(support, m, normalized=normalized_flag) for m in masses)
    if cfg.mode == "unbalanced" and cfg.top_n is not None:
        if cfg.zeta is None:
            raise _ConfigError("--top-n requires --zeta")
        gm = diagonal_topn_kernel(
            masses, DiagonalKernelParams(cfg.top_n, cfg.zeta), support=support
        )
        kernels = (gm,) * len(models)
    else:
        kernels = _load_kernel(cfg, support, len(models))
        if kernels is None:
            raise InputFormatError(
                f"mode={cfg.mode} needs --kernel, --embeddings, or --top-n/--zeta"
            )
    ens = EnsembleInput(models=models, weights=weights, kernels=kernels)
    solver = balanced_barycenter if cfg.mode == "balanced" else unbalanced_barycenter
    result = solver(ens, params)
    return ens, result, result.barycenter, result.couplings


def _bound_checks_for(ens, result, output):
    """Entropy (and, with points, smoothness) report rows; empty when the
    output lives on a different support than the models."""
    checks = []
    try:
        if any(h.support != output.support for h in ens.models):
            return checks
        p = normalize(output)
        h_models = [entropy(normalize(h)) for h in ens.models]
        lhs = float(np.dot(ens.weights.lambdas, h_models))
        h_p = entropy(p)
        checks.append({"name": "entropy", "lhs": lhs, "rhs": h_p,
                       "satisfied": bool(lhs <= h_p + 1e-9)})
        if output.support.points is not None:
            e_models = [smoothness_energy(normalize(h)) for h in ens.models]
            rhs = float(np.dot(ens.weights.lambdas, e_models))
            e_p = smoothness_energy(p)
            checks.append({"name": "smoothness", "lhs": e_p, "rhs": rhs,
                           "satisfied": bool(e_p <= rhs + 1e-9)})
    except WassEnsembleError:
        return []
    return checks


def _ensemble_one(cfg: RunConfig, path: str) -> dict:
    support, masses = io.read_histograms(path)
    weights = _parse_weights(cfg.weights, len(masses))
    ens, result, output, couplings = _solve(cfg, masses, support, weights)

    try:
        out_entropy = entropy(normalize(output))
    except WassEnsembleError:
        out_entropy = None
    smooth = None
    if output.support.points is not None:
        smooth = smoothness_energy(normalize(output))

    doc = {
        "input": path,
        "labels": list(output.support.labels),
        "barycenter": output.mass,
        "entropy": out_entropy,
        "smoothness_energy": smooth,
        "iterations_run": None if result is None else result.iterations_run,
        "final_residual": None if result is None else result.final_residual,
        "converged": True if result is None else result.converged,
        "bound_checks": _bound_checks_for(ens, output if result is None else result.barycenter, output),
    }
    if couplings is not None and cfg.emit_couplings:
        doc["couplings"] = [c.matrix for c in couplings]
    if cfg.attribute_bin is not None:
        if cfg.attribute_bin not in output.support.labels:
            raise InputFormatError(
                f"--attribute-bin {cfg.attribute_bin!r} is not an output label"
            )
        j = output.support.labels.index(cfg.attribute_bin)
        shares = attribute_sources(result, j)
        doc["attributions"] = {
            "bin": cfg.attribute_bin,
            "per_model": [s for s in shares],
        }
    return doc


def _params_doc(cfg: RunConfig) -> dict:
    return {
        "epsilon": cfg.epsilon,
        "kl_lambda": cfg.kl_lambda,
        "max_iter": cfg.max_iter,
        "tolerance": cfg.tolerance,
        "weights": cfg.weights,
        "top_n": cfg.top_n,
        "zeta": cfg.zeta,
        "seed": cfg.seed,
    }


def _write(out: Optional[str], text: str) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _cmd_ensemble(args) -> int:
    cfg = RunConfig(
        mode=args.mode,
        epsilon=args.epsilon,
        kl_lambda=args.kl_lambda,
        max_iter=args.max_iter,
        tolerance=args.tol,
        weights=args.weights,
        top_n=args.top_n,
        zeta=args.zeta,
        seed=args.seed,
        inputs=tuple(args.inputs),
        kernel=args.kernel,
        embeddings=args.embeddings,
        out=args.out,
        emit_couplings=args.emit_couplings,
        attribute_bin=args.attribute_bin,
        workers=args.workers,
        raw_embeddings=args.raw_embeddings,
    )
    if cfg.workers < 1:
        raise _ConfigError("--workers must be >= 1")
    if cfg.workers == 1:
        results = [_ensemble_one(cfg, path) for path in cfg.inputs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda p: _ensemble_one(cfg, p), cfg.inputs))
    doc = {
        "schema": SCHEMA,
        "mode": cfg.mode,
        "params": _params_doc(cfg),
        "results": results,
    }
    _write(cfg.out, io.dump_json(doc))
    return 0


def _cmd_diagnose(args) -> int:
    cfg = RunConfig(
        mode=args.mode, epsilon=args.epsilon, kl_lambda=args.kl_lambda,
        max_iter=args.max_iter, tolerance=args.tol, weights=args.weights,
        top_n=args.top_n, zeta=args.zeta, seed=args.seed,
        inputs=(args.inputs,), kernel=args.kernel, embeddings=args.embeddings,
        out=args.out, emit_couplings=True, attribute_bin=None, workers=1,
        raw_embeddings=args.raw_embeddings,
    )
    support, masses = io.read_histograms(args.inputs)
    weights = _parse_weights(cfg.weights, len(masses))
    ens, result, output, couplings = _solve(cfg, masses, support, weights)
    oracle = None
    if args.oracle is not None:
        osupport, omasses = io.read_histograms(args.oracle)
        if osupport.labels != output.support.labels or len(omasses) != 1:
            raise InputFormatError("--oracle must hold one row on the output labels")
        oracle = normalize(Histogram(output.support, omasses[0]))
    report = check_output_bounds(result, ens, oracle, args.ot_epsilon)
    lemma = check_entropy_lemma(result)
    doc = {
        "schema": SCHEMA,
        "mode": cfg.mode,
        "params": _params_doc(cfg),
        "entropy": report.entropy,
        "smoothness_energy": report.smoothness_energy,
        "per_model_entropies": report.per_model_entropies,
        "bound_checks": [
            {"name": c.name, "lhs": c.lhs, "rhs": c.rhs, "satisfied": c.satisfied}
            for c in list(report.bound_checks) + list(lemma.bound_checks)
        ],
    }
    _write(cfg.out, io.dump_json(doc))
    return 0


def _parse_pair(text: str, flag: str) -> np.ndarray:
    try:
        values = np.array([float(x) for x in text.split(",")])
    except (ValueError, AttributeError) as exc:
        raise _ConfigError(f"bad {flag} value {text!r}") from exc
    if values.size != 2:
        raise _ConfigError(f"{flag} must have exactly two entries")
    return values


def _cmd_oracle(args) -> int:
    try:
        cost = np.array([float(x) for x in args.cost.split(",")]).reshape(2, 2)
    except ValueError as exc:
        raise _ConfigError(f"bad --cost value {args.cost!r}") from exc
    if args.op == "ot":
        if args.p is None or args.q is None:
            raise _ConfigError("oracle --op ot needs --p and --q")
        p = _parse_pair(args.p, "--p")
        q = _parse_pair(args.q, "--q")
        value, plan = exact_ot_2bin(p, q, cost)
        doc = {"schema": SCHEMA, "op": "ot", "value": value, "coupling": plan}
    else:
        if args.inputs is None:
            raise _ConfigError("oracle --op barycenter needs --inputs")
        support, masses = io.read_histograms(args.inputs)
        if len(support) != 2:
            raise InputFormatError("the exact barycenter oracle is 2-bin only")
        weights = _parse_weights(args.weights, len(masses))
        rho = exact_barycenter_2bin(masses, weights.lambdas, cost)
        doc = {"schema": SCHEMA, "op": "barycenter", "barycenter": rho}
    _write(args.out, io.dump_json(doc))
    return 0


def _cmd_bench(args) -> int:
    from .ground_metric import GroundMetric
    from .measures import Support

    rng = np.random.default_rng(args.seed)
    n = args.bins
    support = Support(tuple(f"b{i}" for i in range(n)))
    points = rng.normal(size=(n, 8))
    embedded = Support(support.labels, points)
    gm = kernel_from_cost(cost_from_embeddings(embedded, embedded), args.epsilon)
    params = SolverParams(epsilon=args.epsilon, max_iter=args.max_iter)
    instances = []
    for _ in range(args.instances):
        raw = rng.random((args.models, n)) + 1e-6
        masses = raw / raw.sum(axis=1, keepdims=True)
        models = tuple(Histogram(embedded, m, normalized=True) for m in masses)
        instances.append(
            EnsembleInput(models=models, kernels=(gm,) * args.models)
        )
    balanced_barycenter(instances[0], params)  # warm-up
    timings = []
    for ens in instances:
        t0 = time.perf_counter()
        balanced_barycenter(ens, params)
        timings.append((time.perf_counter() - t0) * 1e3)
    timings_arr = np.array(timings)
    doc = {
        "schema": SCHEMA,
        "models": args.models,
        "bins": n,
        "max_iter": args.max_iter,
        "instances": args.instances,
        "median_ms": float(np.median(timings_arr)),
        "mean_ms": float(np.mean(timings_arr)),
        "min_ms": float(np.min(timings_arr)),
        "max_ms": float(np.max(timings_arr)),
    }
    _write(args.out, io.dump_json(doc))
    return 0


def _cmd_shuffle(args) -> int:
    if args.seed is None:
        raise _ConfigError("shuffle needs --seed")
    support, masses = io.read_histograms(args.inputs)
    if args.kernel is None and args.embeddings is None:
        raise InputFormatError("shuffle needs --kernel or --embeddings")
    cfg = RunConfig(
        mode="balanced", epsilon=args.epsilon, kl_lambda=None,
        max_iter=args.max_iter, tolerance=args.tol, weights="uniform",
        top_n=None, zeta=None, seed=args.seed, inputs=(args.inputs,),
        kernel=args.kernel, embeddings=args.embeddings, out=args.out,
        emit_couplings=False, attribute_bin=None, workers=1,
        raw_embeddings=args.raw_embeddings,
    )
    kernels = _load_kernel(cfg, support, len(masses))
    gm = kernels[0]
    if gm.kernel is None:
        raise _ConfigError("shuffle needs --epsilon to build a kernel from costs")
    models = tuple(Histogram(support, m) for m in masses)
    ens = EnsembleInput(models=models, kernels=kernels)
    shuffled = semantic_shuffle(ens, gm, seed=args.seed)
    if args.out is None:
        raise _ConfigError("shuffle needs --out for the perturbed CSV")
    io.write_histograms(args.out, support, [h.mass for h in shuffled.models])
    return 0


_COMMANDS = {
    "ensemble": _cmd_ensemble,
    "diagnose": _cmd_diagnose,
    "oracle": _cmd_oracle,
    "bench": _cmd_bench,
    "shuffle": _cmd_shuffle,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _ConfigError as exc:
        print(f"error: BadConfig: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: BadConfig: {exc}", file=sys.stderr)
        return 1
    except InputFormatError as exc:
        print(f"error: {exc.name}: {exc}", file=sys.stderr)
        return 2
    except WassEnsembleError as exc:
        print(f"error: {exc.name}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
