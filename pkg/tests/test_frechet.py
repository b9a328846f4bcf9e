import numpy as np
import pytest

from wass_ensemble import (
    Histogram,
    MeanOptions,
    Support,
    arithmetic_mean,
    extended_kl,
    geometric_mean,
    performance_weights,
)
from wass_ensemble.errors import NonPositiveScore, SupportMismatch
from wass_ensemble.measures import EnsembleInput, EnsembleWeights

from conftest import random_normalized, random_weights

AB = Support(("a", "b"))


def _ens(masses, weights=None):
    support = Support(tuple(f"b{i}" for i in range(len(masses[0]))))
    models = tuple(Histogram(support, np.asarray(m), normalized=True) for m in masses)
    w = EnsembleWeights(np.asarray(weights)) if weights is not None else None
    return EnsembleInput(models=models, weights=w)


class TestArithmeticMean:
    def test_symmetric_pair(self):
        out = arithmetic_mean(_ens([[0.8, 0.2], [0.2, 0.8]]))
        np.testing.assert_allclose(out.mass, [0.5, 0.5])

    def test_single_model_is_identity(self):
        out = arithmetic_mean(_ens([[0.3, 0.7]]))
        np.testing.assert_array_equal(out.mass, [0.3, 0.7])

    def test_support_mismatch(self):
        h1 = Histogram(AB, np.array([1.0, 0.0]), normalized=True)
        h2 = Histogram(Support(("x", "y")), np.array([1.0, 0.0]), normalized=True)
        ens = EnsembleInput(models=(h1, h2))
        with pytest.raises(SupportMismatch):
            arithmetic_mean(ens)


class TestGeometricMean:
    def test_unnormalized_by_default(self):
        out = geometric_mean(_ens([[0.8, 0.2], [0.2, 0.8]]))
        np.testing.assert_allclose(out.mass, [0.4, 0.4])
        assert not out.normalized

    def test_renormalization_flag(self):
        out = geometric_mean(
            _ens([[0.8, 0.2], [0.2, 0.8]]), MeanOptions(renormalize_output=True)
        )
        np.testing.assert_allclose(out.mass, [0.5, 0.5])

    def test_identical_models_unchanged(self):
        out = geometric_mean(_ens([[0.3, 0.7], [0.3, 0.7]]))
        np.testing.assert_allclose(out.mass, [0.3, 0.7])

    def test_zero_floor_saves_zero_bins(self):
        out = geometric_mean(_ens([[1.0, 0.0], [0.5, 0.5]]),
                             MeanOptions(zero_floor=1e-12))
        assert out.mass[1] > 0


class TestPerformanceWeights:
    def test_equal_scores(self):
        np.testing.assert_allclose(performance_weights([0.5, 0.5]).lambdas, 0.5)

    def test_validation_map_pair(self):
        w = performance_weights([63.3, 64.1])
        np.testing.assert_allclose(w.lambdas, [0.49686, 0.50314], atol=1e-5)

    def test_proportional(self):
        w = performance_weights([1.0, 2.0, 3.0])
        np.testing.assert_allclose(w.lambdas, [1 / 6, 2 / 6, 3 / 6])

    def test_non_positive_rejected(self):
        with pytest.raises(NonPositiveScore):
            performance_weights([1.0, 0.0])


class TestMinimizerProperties:
    """Both means minimize their weighted objective: any perturbation of the
    mean can only increase it."""

    def test_arithmetic_is_l2_minimizer(self, rng):
        for _ in range(20):
            n, m = 6, 3
            masses = [random_normalized(rng, n) for _ in range(m)]
            w = random_weights(rng, m)
            mean = sum(l * x for l, x in zip(w.lambdas, masses))
            base = sum(
                l * np.sum((mean - x) ** 2) for l, x in zip(w.lambdas, masses)
            )
            for _ in range(50):
                delta = rng.normal(size=n)
                moved = mean + 1e-3 * delta
                value = sum(
                    l * np.sum((moved - x) ** 2) for l, x in zip(w.lambdas, masses)
                )
                assert value >= base - 1e-12

    def test_geometric_is_extended_kl_minimizer(self, rng):
        for _ in range(20):
            n, m = 6, 3
            masses = [random_normalized(rng, n) for _ in range(m)]
            w = random_weights(rng, m)
            log_mean = sum(l * np.log(x) for l, x in zip(w.lambdas, masses))
            mean = np.exp(log_mean)
            base = sum(l * extended_kl(mean, x) for l, x in zip(w.lambdas, masses))
            for _ in range(50):
                delta = rng.normal(size=n)
                moved = np.maximum(mean + 1e-4 * delta, 1e-9)
                value = sum(
                    l * extended_kl(moved, x) for l, x in zip(w.lambdas, masses)
                )
                assert value >= base - 1e-12


class TestOracleGuarantees:
    def test_extended_kl_bound_for_geometric(self, rng):
        for _ in range(200):
            n, m = 8, 3
            masses = [random_normalized(rng, n) for _ in range(m)]
            w = random_weights(rng, m)
            nu = random_normalized(rng, n)
            mean = np.exp(sum(l * np.log(x) for l, x in zip(w.lambdas, masses)))
            lhs = extended_kl(nu, mean)
            rhs = sum(l * extended_kl(nu, x) for l, x in zip(w.lambdas, masses))
            assert lhs <= rhs + 1e-12

    def test_l2_bound_for_arithmetic(self, rng):
        for _ in range(200):
            n, m = 8, 3
            masses = [random_normalized(rng, n) for _ in range(m)]
            w = random_weights(rng, m)
            nu = random_normalized(rng, n)
            mean = sum(l * x for l, x in zip(w.lambdas, masses))
            lhs = np.sum((nu - mean) ** 2)
            rhs = 2 * sum(
                l * np.sum((nu - x) ** 2) for l, x in zip(w.lambdas, masses)
            )
            assert lhs <= rhs + 1e-12

    def test_entropy_gain_of_arithmetic_mean(self, rng):
        # entropy of the mixture beats the mean entropy by the pairwise
        # l1 separation term (unordered pairs)
        for _ in range(200):
            n, m = 8, 3
            masses = [random_normalized(rng, n) for _ in range(m)]
            w = random_weights(rng, m)
            mix = sum(l * x for l, x in zip(w.lambdas, masses))

            def H(x):
                pos = x[x > 0]
                return -np.sum(pos * np.log(pos))

            bound = sum(l * H(x) for l, x in zip(w.lambdas, masses))
            for i in range(m):
                for j in range(i + 1, m):
                    gap = np.abs(masses[i] - masses[j]).sum()
                    bound += 0.5 * w.lambdas[i] * w.lambdas[j] * gap ** 2
            assert H(mix) >= bound - 1e-12

    def test_elementwise_am_gm(self, rng):
        for _ in range(100):
            n, m = 8, 4
            masses = [random_normalized(rng, n) for _ in range(m)]
            w = random_weights(rng, m)
            geo = np.exp(sum(l * np.log(x) for l, x in zip(w.lambdas, masses)))
            arith = sum(l * x for l, x in zip(w.lambdas, masses))
            assert np.all(geo <= arith + 1e-15)
