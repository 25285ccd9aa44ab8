"""Projection head, prototypes, distance softmax, and the basic loss."""

import math

import numpy as np
import pytest

from fewgen.errors import DimensionMismatch, EmptyClass
from fewgen.protocore import (
    ProjectionHead,
    basic_loss,
    classify,
    compute_prototypes,
    load_head,
    project,
    save_head,
    squared_distances,
)

from oracles import cross_entropy, softmax_probs


class TestProject:
    def test_identity(self):
        head = ProjectionHead.identity(3)
        x = np.array([1.0, -2.0, 0.5])
        np.testing.assert_array_equal(project(head, x), x)

    def test_zero_weight_gives_bias(self):
        head = ProjectionHead(weight=np.zeros((2, 3)), bias=np.array([1.0, 1.0]))
        np.testing.assert_array_equal(project(head, np.array([5.0, -7.0, 2.0])), [1.0, 1.0])

    def test_basis_vector_selects_column(self):
        rng = np.random.default_rng(42)
        weight = rng.normal(size=(4, 3))
        head = ProjectionHead(weight=weight, bias=np.zeros(4))
        np.testing.assert_allclose(project(head, np.array([1.0, 0.0, 0.0])), weight[:, 0])

    def test_batch_rows(self):
        rng = np.random.default_rng(0)
        head = ProjectionHead(weight=rng.normal(size=(2, 3)), bias=rng.normal(size=2))
        xs = rng.normal(size=(5, 3))
        batched = project(head, xs)
        for i in range(5):
            np.testing.assert_allclose(batched[i], project(head, xs[i]))

    def test_dimension_mismatch(self):
        head = ProjectionHead.identity(3)
        with pytest.raises(DimensionMismatch):
            project(head, np.zeros(4))

    def test_orthonormal_rows(self):
        head = ProjectionHead.orthonormal(8, 4, np.random.default_rng(1))
        gram = head.weight @ head.weight.T
        np.testing.assert_allclose(gram, np.eye(4), atol=1e-12)


class TestPrototypes:
    def test_single_member_classes(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        protos = compute_prototypes(x, np.array([0, 1]), 2)
        np.testing.assert_array_equal(protos, x)

    def test_mean_of_two(self):
        x = np.array([[0.0, 0.0], [2.0, 2.0]])
        protos = compute_prototypes(x, np.array([0, 0]), 1)
        np.testing.assert_array_equal(protos[0], [1.0, 1.0])

    def test_augmented_mean_of_four(self):
        x = np.array([[1.0, 0.0], [3.0, 0.0], [1.0, 4.0], [3.0, 4.0]])
        protos = compute_prototypes(x, np.array([0, 0, 0, 0]), 1)
        np.testing.assert_array_equal(protos[0], [2.0, 2.0])

    def test_member_order_irrelevant(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(6, 4))
        y = np.array([0, 1, 0, 1, 0, 1])
        perm = rng.permutation(6)
        a = compute_prototypes(x, y, 2)
        b = compute_prototypes(x[perm], y[perm], 2)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)

    def test_empty_class_raises(self):
        with pytest.raises(EmptyClass) as err:
            compute_prototypes(np.zeros((2, 2)), np.array([0, 2]), 3)
        assert err.value.class_index == 1


class TestClassify:
    def test_query_at_one_prototype(self):
        protos = np.array([[0.0, 0.0], [10.0, 0.0]])
        probs = classify(np.array([0.0, 0.0]), protos)
        assert probs[0] >= 1 - 1e-40

    def test_equidistant_uniform(self):
        protos = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        probs = classify(np.array([0.0, 0.0]), protos)
        np.testing.assert_allclose(probs, 0.25, rtol=0, atol=1e-15)

    def test_single_class(self):
        probs = classify(np.array([3.0, 4.0]), np.array([[0.0, 0.0]]))
        np.testing.assert_array_equal(probs, [1.0])

    def test_rows_sum_to_one_large_magnitudes(self):
        rng = np.random.default_rng(42)
        queries = rng.uniform(-1e3, 1e3, size=(50, 6))
        protos = rng.uniform(-1e3, 1e3, size=(5, 6))
        probs = classify(queries, protos)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=0, atol=1e-12)
        assert np.all(probs >= 0)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(8)
        queries = rng.normal(size=(10, 3))
        protos = rng.normal(size=(4, 3))
        probs = classify(queries, protos)
        for i in range(10):
            np.testing.assert_allclose(probs[i], softmax_probs(queries[i], protos), atol=1e-12)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(5)
        query = rng.normal(size=4)
        protos = rng.normal(size=(6, 4))
        perm = rng.permutation(6)
        probs = classify(query, protos)
        permuted = classify(query, protos[perm])
        np.testing.assert_allclose(permuted, probs[perm], atol=1e-15)
        assert perm[np.argmax(permuted)] == np.argmax(probs)

    def test_translation_invariance(self):
        rng = np.random.default_rng(6)
        query = rng.normal(size=4)
        protos = rng.normal(size=(3, 4))
        shift = rng.normal(size=4) * 10
        np.testing.assert_allclose(
            classify(query + shift, protos + shift), classify(query, protos), atol=1e-12
        )

    def test_squared_distances(self):
        queries = np.array([[0.0, 0.0], [3.0, 4.0]])
        protos = np.array([[0.0, 0.0], [1.0, 0.0]])
        np.testing.assert_allclose(
            squared_distances(queries, protos), [[0.0, 1.0], [25.0, 20.0]]
        )


class TestBasicLoss:
    def test_perfect_prediction(self):
        rows = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert basic_loss(rows, np.array([0, 1])) == 0.0

    def test_uniform_five_way(self):
        rows = np.full((8, 5), 0.2)
        np.testing.assert_allclose(basic_loss(rows, np.zeros(8, dtype=int)), math.log(5))

    def test_half_probability(self):
        rows = np.array([[0.5, 0.25, 0.25]])
        np.testing.assert_allclose(basic_loss(rows, np.array([0])), math.log(2))

    def test_zero_probability_clamped_finite(self):
        rows = np.array([[0.0, 1.0]])
        loss = basic_loss(rows, np.array([0]))
        assert np.isfinite(loss)
        np.testing.assert_allclose(loss, -math.log(1e-300))

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(11)
        queries = rng.normal(size=(12, 3))
        protos = rng.normal(size=(4, 3))
        labels = rng.integers(0, 4, size=12)
        probs = classify(queries, protos)
        np.testing.assert_allclose(
            basic_loss(probs, labels), cross_entropy(queries, labels, protos), atol=1e-12
        )


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(42)
        head = ProjectionHead(weight=rng.normal(size=(4, 6)), bias=rng.normal(size=4))
        path = tmp_path / "head.ckpt"
        save_head(head, path)
        back = load_head(path)
        np.testing.assert_array_equal(back.weight, head.weight)
        np.testing.assert_array_equal(back.bias, head.bias)
        assert (back.d_in, back.d_out) == (6, 4)

    def test_rejects_non_finite_head(self):
        with pytest.raises(ValueError):
            ProjectionHead(weight=np.array([[np.nan]]), bias=np.zeros(1))
