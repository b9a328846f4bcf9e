import numpy as np
import pytest

from wass_ensemble import (
    DiagonalKernelParams,
    Support,
    attribute_class_kernel,
    cost_from_embeddings,
    diagonal_topn_kernel,
    identity_kernel,
    kernel_from_cost,
    kernel_from_graph,
)
from wass_ensemble.errors import (
    AsymmetricAdjacency,
    DimensionMismatch,
    EmptyColumn,
    EmptyPosteriors,
    MissingPoints,
    UnderflowAllZeroRow,
)
from wass_ensemble.ground_metric import KERNEL_FLOOR, GroundMetric


def line_support():
    return Support(("x0", "x1"), np.array([[0.0], [1.0]]))


class TestCostFromEmbeddings:
    def test_one_dimensional_pair(self):
        gm = cost_from_embeddings(line_support(), line_support(),
                                  normalize_vectors=False)
        np.testing.assert_array_equal(gm.cost, [[0.0, 1.0], [1.0, 0.0]])

    def test_zero_diagonal_for_identical_supports(self):
        rng = np.random.default_rng(0)
        sup = Support(tuple("abcde"), rng.normal(size=(5, 3)))
        gm = cost_from_embeddings(sup, sup, normalize_vectors=False)
        np.testing.assert_array_equal(np.diag(gm.cost), np.zeros(5))

    def test_unit_vectors_orthogonal_cost_two(self):
        sup = Support(("e1", "e2"), np.array([[1.0, 0.0], [0.0, 1.0]]))
        gm = cost_from_embeddings(sup, sup, normalize_vectors=True)
        assert gm.cost[0, 1] == pytest.approx(2.0)

    def test_missing_points(self):
        with pytest.raises(MissingPoints):
            cost_from_embeddings(Support(("a",)), line_support())

    def test_dimension_mismatch(self):
        a = Support(("a",), np.array([[1.0, 0.0]]))
        b = Support(("b",), np.array([[1.0]]))
        with pytest.raises(DimensionMismatch):
            cost_from_embeddings(a, b, normalize_vectors=False)


class TestKernelFromCost:
    def test_direct_exponentiation(self):
        gm = cost_from_embeddings(line_support(), line_support(),
                                  normalize_vectors=False)
        k = kernel_from_cost(gm, 1.0)
        np.testing.assert_allclose(
            k.kernel, [[1.0, np.exp(-1.0)], [np.exp(-1.0), 1.0]]
        )
        assert k.epsilon == 1.0

    def test_zero_cost_gives_all_ones(self):
        sup = Support(("a", "b"), np.zeros((2, 1)))
        gm = cost_from_embeddings(sup, sup, normalize_vectors=False)
        k = kernel_from_cost(gm, 0.5)
        np.testing.assert_array_equal(k.kernel, np.ones((2, 2)))

    def test_underflowed_entries_clamped(self):
        gm = GroundMetric(
            source=Support(("a", "b")), target=Support(("a", "b")),
            cost=np.array([[0.0, 100.0], [100.0, 0.0]]),
        )
        k = kernel_from_cost(gm, 1.0)
        # exp(-100) is representable, exp(-1000) is not: force the clamp
        tiny = kernel_from_cost(
            GroundMetric(source=gm.source, target=gm.target, cost=gm.cost * 10),
            1e-2,
        )
        assert np.all(k.kernel > 0)
        assert tiny.kernel[0, 1] == KERNEL_FLOOR

    def test_all_zero_row_raises(self):
        gm = GroundMetric(
            source=Support(("a",)), target=Support(("b", "c")),
            cost=np.array([[1e6, 1e6]]),
        )
        with pytest.raises(UnderflowAllZeroRow):
            kernel_from_cost(gm, 1.0)

    def test_identity_distance_monotone_in_epsilon(self):
        rng = np.random.default_rng(3)
        sup = Support(tuple(f"w{i}" for i in range(6)), rng.normal(size=(6, 3)))
        gm = cost_from_embeddings(sup, sup, normalize_vectors=False)
        distances = [
            kernel_from_cost(gm, eps).identity_distance
            for eps in (0.05, 0.1, 0.3, 1.0, 3.0, 10.0)
        ]
        assert all(b >= a for a, b in zip(distances, distances[1:]))


class TestKernelFromGraph:
    def test_empty_graph_is_identity_up_to_floor(self):
        k = kernel_from_graph(np.zeros((3, 3)), self_weight=1.0)
        np.testing.assert_array_equal(np.diag(k.kernel), np.ones(3))
        off = k.kernel[~np.eye(3, dtype=bool)]
        np.testing.assert_array_equal(off, KERNEL_FLOOR)
        assert k.identity_distance == pytest.approx(0.0, abs=1e-250)

    def test_two_synonyms(self):
        adj = np.array([[0.0, 0.5], [0.5, 0.0]])
        k = kernel_from_graph(adj, self_weight=1.0)
        np.testing.assert_array_equal(k.kernel, [[1.0, 0.5], [0.5, 1.0]])

    def test_asymmetric_rejected(self):
        with pytest.raises(AsymmetricAdjacency):
            kernel_from_graph(np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0)


class TestDiagonalTopN:
    def test_union_of_tops_with_full_average(self):
        posts = [np.array([0.9, 0.5, 0.1]), np.array([0.8, 0.2, 0.3])]
        k = diagonal_topn_kernel(posts, DiagonalKernelParams(top_n=1, floor_zeta=0.01))
        np.testing.assert_allclose(np.diag(k.kernel), [0.85, 0.01, 0.01])

    def test_top_n_equal_to_n_averages_everything(self):
        posts = [np.array([0.9, 0.5]), np.array([0.1, 0.5])]
        k = diagonal_topn_kernel(posts, DiagonalKernelParams(top_n=2, floor_zeta=0.01))
        np.testing.assert_allclose(np.diag(k.kernel), [0.5, 0.5])

    def test_single_model(self):
        k = diagonal_topn_kernel(
            [np.array([1.0, 0.0])], DiagonalKernelParams(top_n=1, floor_zeta=0.01)
        )
        np.testing.assert_allclose(np.diag(k.kernel), [1.0, 0.01])

    def test_ties_break_to_lower_index(self):
        posts = [np.array([0.5, 0.5, 0.1])]
        k = diagonal_topn_kernel(posts, DiagonalKernelParams(top_n=1, floor_zeta=0.01))
        np.testing.assert_allclose(np.diag(k.kernel), [0.5, 0.01, 0.01])

    def test_off_diagonal_at_floor(self):
        posts = [np.array([0.9, 0.5])]
        k = diagonal_topn_kernel(posts, DiagonalKernelParams(top_n=1, floor_zeta=0.01))
        assert k.kernel[0, 1] == KERNEL_FLOOR

    def test_empty_rejected(self):
        with pytest.raises(EmptyPosteriors):
            diagonal_topn_kernel([], DiagonalKernelParams(top_n=1, floor_zeta=0.01))


class TestAttributeClassKernel:
    def test_column_normalization(self):
        table = np.array([[1, 0], [1, 1], [0, 1]])
        k = attribute_class_kernel(table)
        np.testing.assert_allclose(
            k.kernel, [[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]], atol=1e-250
        )
        np.testing.assert_allclose(k.kernel.sum(axis=0), 1.0, atol=1e-12)

    def test_identity_table(self):
        k = attribute_class_kernel(np.eye(2))
        np.testing.assert_allclose(k.kernel, np.eye(2), atol=1e-250)

    def test_empty_column(self):
        with pytest.raises(EmptyColumn):
            attribute_class_kernel(np.array([[1, 0], [1, 0]]))

    def test_non_binary_rejected(self):
        with pytest.raises(ValueError):
            attribute_class_kernel(np.array([[0.5, 1.0], [1.0, 0.0]]))


def test_identity_kernel_reports_zero_distance():
    k = identity_kernel(Support(("a", "b", "c")))
    assert k.identity_distance == 0.0
    np.testing.assert_array_equal(np.diag(k.kernel), np.ones(3))
