"""Shared generators for the test suite.

The random families here are seeded and deterministic so every run checks
the same instances.
"""
import numpy as np
import pytest

from wass_ensemble import Histogram, Support, cost_from_embeddings
from wass_ensemble.measures import EnsembleInput, EnsembleWeights


def random_normalized(rng, n):
    x = rng.random(n) + 1e-6
    return x / x.sum()


def random_weights(rng, m):
    lam = rng.random(m) + 0.1
    return EnsembleWeights(lam / lam.sum())


def unit_interval_support():
    """The two-bin support {0, 1} on the real line (cost 1 off-diagonal)."""
    return Support(("x0", "x1"), np.array([[0.0], [1.0]]))


def twin_pair_support(rng, n_pairs=5, dim=4, scale=3.0, twin_sq=0.1, min_sq=16.0):
    """Well-separated twin pairs: each bin has one metrically-near synonym.

    Mass blurred onto a twin raises entropy at almost no interaction-energy
    cost, which is the geometry the semantic kernels are built for.
    """
    while True:
        centers = rng.normal(size=(n_pairs, dim)) * scale
        if all(
            np.sum((centers[i] - centers[j]) ** 2) >= min_sq
            for i in range(n_pairs)
            for j in range(i + 1, n_pairs)
        ):
            break
    pts = []
    for c in centers:
        off = rng.normal(size=dim)
        off *= np.sqrt(twin_sq) / np.linalg.norm(off)
        pts.append(c)
        pts.append(c + off)
    pts = np.array(pts)
    return Support(tuple(f"w{i}" for i in range(2 * n_pairs)), pts)


def estimates_of_truth(rng, support, m, sigma=0.8):
    """m models drawn as multiplicative-noise estimates of one truth."""
    n = len(support)
    truth = rng.dirichlet(np.ones(n)) + 1e-4
    models = []
    for _ in range(m):
        x = truth * np.exp(sigma * rng.normal(size=n))
        models.append(Histogram(support, x / x.sum(), normalized=True))
    return tuple(models)


def two_bin_ensemble(rng):
    """A random 2-bin ensemble with non-uniform weights on {0, 1}."""
    sp = unit_interval_support()
    a, b = rng.random(), rng.random()
    l1 = 0.55 + 0.4 * rng.random()
    models = (
        Histogram(sp, np.array([a, 1 - a]), normalized=True),
        Histogram(sp, np.array([b, 1 - b]), normalized=True),
    )
    weights = EnsembleWeights(np.array([l1, 1 - l1]))
    gm = cost_from_embeddings(sp, sp, normalize_vectors=False)
    return EnsembleInput(models=models, weights=weights, kernels=(gm, gm))


@pytest.fixture
def rng():
    return np.random.default_rng(20240809)
