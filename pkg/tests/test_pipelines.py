import numpy as np
import pytest

from wass_ensemble import (
    DiagonalKernelParams,
    Histogram,
    SolverParams,
    Support,
    attribute_class_kernel,
    identity_kernel,
    kernel_from_graph,
)
from wass_ensemble.errors import EmptyDataset
from wass_ensemble.measures import EnsembleInput
from wass_ensemble.pipelines import (
    ClusterTaskConfig,
    attribute_to_class,
    baseline_attribute_projection,
    cluster_recovery_trial,
    evaluate_multilabel,
    kernel_clusters,
    make_cluster_task,
    multilabel_ensemble,
    semantic_shuffle,
)

UNB = SolverParams(epsilon=0.3, kl_lambda=2.0, max_iter=50, tolerance=1e-12)


class TestAttributeToClass:
    def test_exclusive_attribute_decides_class(self):
        kernel = attribute_class_kernel(np.eye(2))
        out = attribute_to_class(
            [np.array([1.0, 0.05]), np.array([1.0, 0.05])], kernel, UNB
        )
        assert int(np.argmax(out.mass)) == 0

    def test_identical_models_match_single_model(self):
        kernel = attribute_class_kernel(np.array([[1, 0], [1, 1], [0, 1]]))
        scores = np.array([0.9, 0.4, 0.2])
        single = attribute_to_class([scores], kernel, UNB)
        triple = attribute_to_class([scores] * 3, kernel, UNB)
        np.testing.assert_allclose(single.mass, triple.mass, atol=1e-9)

    def test_output_lives_on_class_support(self):
        kernel = attribute_class_kernel(np.array([[1, 0], [1, 1], [0, 1]]))
        out = attribute_to_class([np.array([0.9, 0.4, 0.2])], kernel, UNB)
        assert out.support == kernel.target


class TestBaselineProjection:
    def test_identity_kernel_arithmetic_is_mean(self):
        kernel = attribute_class_kernel(np.eye(2))
        out = baseline_attribute_projection(
            [np.array([0.8, 0.2]), np.array([0.4, 0.6])], kernel, "arithmetic"
        )
        np.testing.assert_allclose(out.mass, [0.6, 0.4])

    def test_single_model_projects_through_kernel(self):
        kernel = attribute_class_kernel(np.array([[1, 0], [1, 1], [0, 1]]))
        scores = np.array([0.9, 0.4, 0.2])
        out = baseline_attribute_projection([scores], kernel, "arithmetic")
        np.testing.assert_allclose(out.mass, kernel.kernel.T @ scores)

    def test_toy_identity(self):
        kernel = attribute_class_kernel(np.eye(2))
        out = baseline_attribute_projection([np.array([0.9, 0.1])], kernel,
                                            "geometric")
        np.testing.assert_allclose(out.mass, [0.9, 0.1], atol=1e-250)

    def test_unknown_mean_type(self):
        kernel = attribute_class_kernel(np.eye(2))
        with pytest.raises(ValueError):
            baseline_attribute_projection([np.array([1.0, 0.0])], kernel, "mode")


class TestMultilabelEnsemble:
    def test_ranking_preserved_single_model(self):
        scores = np.array([0.9, 0.5, 0.2, 0.7])
        out = multilabel_ensemble(
            [scores], UNB, DiagonalKernelParams(top_n=4, floor_zeta=0.01)
        )
        assert list(np.argsort(-out)) == list(np.argsort(-scores))

    def test_unanimous_top_category_wins(self):
        scores = [np.array([1.0, 0.3, 0.2]), np.array([1.0, 0.2, 0.4])]
        out = multilabel_ensemble(
            scores, UNB, DiagonalKernelParams(top_n=1, floor_zeta=1e-3)
        )
        assert int(np.argmax(out)) == 0

    def test_symmetric_categories_get_equal_mass(self):
        scores = [np.array([0.6, 0.6, 0.1]), np.array([0.4, 0.4, 0.3])]
        out = multilabel_ensemble(
            scores, UNB, DiagonalKernelParams(top_n=2, floor_zeta=0.01)
        )
        assert out[0] == pytest.approx(out[1], abs=1e-9)

    def test_no_unbounded_blowup(self, rng):
        ratios = []
        for _ in range(25):
            m, n = 3, 8
            scores = [rng.random(n) for _ in range(m)]
            out = multilabel_ensemble(
                scores, UNB, DiagonalKernelParams(top_n=2, floor_zeta=0.01)
            )
            ratios.append(out.max() / max(s.max() for s in scores))
        # solver-dependent spread constant, recorded here
        assert max(ratios) <= 2.0


class TestEvaluateMultilabel:
    def test_perfect_predictor(self):
        truths = [np.array([1, 0, 1]), np.array([0, 1, 0])]
        report = evaluate_multilabel([t.astype(float) for t in truths], truths)
        assert report.map == 1.0
        assert report.f1_c == report.f1_o == 1.0
        assert report.p_c == report.r_c == report.p_o == report.r_o == 1.0

    def test_positive_ranked_second_gives_half(self):
        preds = [np.array([0.9]), np.array([0.8])]
        truths = [np.array([0]), np.array([1])]
        report = evaluate_multilabel(preds, truths, threshold=0.5)
        assert report.map == pytest.approx(0.5)

    def test_all_negative_class_excluded_from_macro(self):
        preds = [np.array([0.9, 0.1]), np.array([0.8, 0.2])]
        truths = [np.array([1, 0]), np.array([1, 0])]
        report = evaluate_multilabel(preds, truths)
        assert report.map == 1.0
        assert report.p_c == 1.0

    def test_map_invariant_to_monotone_transform(self, rng):
        m, n = 20, 5
        preds = [rng.random(n) for _ in range(m)]
        truths = [(rng.random(n) > 0.6).astype(float) for _ in range(m)]
        if not any(t.sum() for t in truths):
            truths[0][0] = 1.0
        base = evaluate_multilabel(preds, truths).map
        squashed = evaluate_multilabel(
            [1.0 / (1.0 + np.exp(-(7 * p - 2))) for p in preds], truths
        ).map
        assert squashed == pytest.approx(base, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(EmptyDataset):
            evaluate_multilabel([], [])


class TestSemanticShuffle:
    def _ensemble(self, rng, kernel):
        support = kernel.source
        models = tuple(
            Histogram(support, rng.random(len(support))) for _ in range(3)
        )
        return EnsembleInput(models=models, kernels=(kernel,) * 3)

    def test_identity_kernel_is_noop(self, rng):
        kernel = identity_kernel(Support(tuple("abcd")))
        ens = self._ensemble(rng, kernel)
        out = semantic_shuffle(ens, kernel, seed=3)
        for before, after in zip(ens.models, out.models):
            np.testing.assert_array_equal(before.mass, after.mass)

    def test_all_ones_kernel_fully_permutes(self, rng):
        n = 6
        adj = np.ones((n, n))
        kernel = kernel_from_graph(adj - np.eye(n), self_weight=1.0)
        ens = self._ensemble(rng, kernel)
        out = semantic_shuffle(ens, kernel, seed=5)
        for before, after in zip(ens.models, out.models):
            assert sorted(before.mass) == pytest.approx(sorted(after.mass))

    def test_seeded_reproducibility(self, rng):
        adj = np.zeros((6, 6))
        adj[0, 1] = adj[1, 0] = 1.0
        adj[2, 3] = adj[3, 2] = 1.0
        kernel = kernel_from_graph(adj, self_weight=1.0)
        ens = self._ensemble(rng, kernel)
        a = semantic_shuffle(ens, kernel, seed=11)
        b = semantic_shuffle(ens, kernel, seed=11)
        c = semantic_shuffle(ens, kernel, seed=12)
        for x, y in zip(a.models, b.models):
            np.testing.assert_array_equal(x.mass, y.mass)
        assert any(
            not np.array_equal(x.mass, y.mass) for x, y in zip(a.models, c.models)
        )

    def test_shuffle_stays_within_clusters(self, rng):
        adj = np.zeros((6, 6))
        adj[0, 1] = adj[1, 0] = 1.0
        kernel = kernel_from_graph(adj, self_weight=1.0)
        ens = self._ensemble(rng, kernel)
        out = semantic_shuffle(ens, kernel, seed=2)
        for before, after in zip(ens.models, out.models):
            np.testing.assert_array_equal(before.mass[2:], after.mass[2:])
            assert sorted(before.mass[:2]) == pytest.approx(sorted(after.mass[:2]))


class TestKernelClusters:
    def test_identity_gives_singletons(self):
        kernel = identity_kernel(Support(tuple("abc")))
        assert kernel_clusters(kernel.kernel) == [[0], [1], [2]]

    def test_block_structure_recovered(self):
        adj = np.zeros((5, 5))
        adj[0, 1] = adj[1, 0] = 1.0
        adj[2, 3] = adj[3, 2] = 0.9
        kernel = kernel_from_graph(adj, self_weight=1.0)
        assert kernel_clusters(kernel.kernel) == [[0, 1], [2, 3], [4]]


class TestClusterRecovery:
    def test_trial_reports_all_methods(self):
        result = cluster_recovery_trial(0)
        assert set(result) == {"barycenter", "arithmetic", "geometric"}

    def test_task_is_seed_deterministic(self):
        a, _, ca = make_cluster_task(7)
        b, _, cb = make_cluster_task(7)
        assert ca == cb
        for x, y in zip(a.models, b.models):
            np.testing.assert_array_equal(x.mass, y.mass)

    def test_barycenter_beats_means_on_average(self):
        wins = {"barycenter": 0, "arithmetic": 0, "geometric": 0}
        for seed in range(60):
            outcome = cluster_recovery_trial(seed, ClusterTaskConfig())
            for name, ok in outcome.items():
                wins[name] += int(ok)
        assert wins["barycenter"] > wins["arithmetic"]
        assert wins["barycenter"] > wins["geometric"]
