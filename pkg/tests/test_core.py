import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hubtta.core import (
    EmbeddingSet,
    ProbabilityRow,
    cosine_similarity,
    entropy,
    l2_normalize,
    mean_pool,
    rank_rows,
    softmax,
)
from hubtta.errors import DimensionMismatch, NonFiniteInput, ZeroNormRow

finite_vectors = arrays(
    np.float64,
    st.integers(2, 8),
    elements=st.floats(-50, 50, allow_nan=False, allow_infinity=False),
)


class TestL2Normalize:
    def test_three_four_five(self):
        e = l2_normalize(EmbeddingSet(data=np.array([[3.0, 4.0]])))
        np.testing.assert_allclose(e.data, [[0.6, 0.8]], atol=1e-12)

    def test_already_unit(self):
        e = l2_normalize(EmbeddingSet(data=np.array([[1.0, 0.0]])))
        np.testing.assert_allclose(e.data, [[1.0, 0.0]], atol=1e-12)

    def test_zero_row_raises(self):
        with pytest.raises(ZeroNormRow) as exc:
            l2_normalize(EmbeddingSet(data=np.array([[1.0, 0.0], [0.0, 0.0]])))
        assert exc.value.index == 1

    def test_unit_norms_including_frames(self, rng):
        frames = rng.standard_normal((5, 3, 4))
        e = l2_normalize(EmbeddingSet(data=frames.mean(axis=1), frames=frames))
        np.testing.assert_allclose(np.linalg.norm(e.data, axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(np.linalg.norm(e.frames, axis=2), 1.0, atol=1e-9)

    def test_direction_preserved(self, rng):
        data = rng.standard_normal((4, 6))
        e = l2_normalize(EmbeddingSet(data=data))
        cos = np.sum(e.data * data, axis=1) / np.linalg.norm(data, axis=1)
        np.testing.assert_allclose(cos, 1.0, atol=1e-12)


class TestMeanPool:
    def test_basis_vectors(self):
        e = mean_pool(np.array([[[1.0, 0.0], [0.0, 1.0]]]))
        np.testing.assert_allclose(e.data, [[0.5, 0.5]])

    def test_single_frame_identity(self, rng):
        frames = rng.standard_normal((3, 1, 5))
        np.testing.assert_array_equal(mean_pool(frames).data, frames[:, 0, :])

    def test_three_frames(self):
        e = mean_pool(np.array([[[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]]]))
        np.testing.assert_allclose(e.data, [[1.0, 1.0]])

    def test_repooling_matches_data(self, rng):
        frames = rng.standard_normal((6, 4, 3))
        e = mean_pool(frames)
        np.testing.assert_allclose(e.frames.mean(axis=1), e.data, atol=1e-6)

    def test_pool_then_normalize_deterministic(self, rng):
        frames = rng.standard_normal((4, 3, 8))
        a = l2_normalize(mean_pool(frames.copy()))
        b = l2_normalize(mean_pool(frames.copy()))
        assert np.array_equal(a.data, b.data) and np.array_equal(a.frames, b.frames)


class TestCosineSimilarity:
    def test_self_similarity_unit_diagonal(self, rng):
        q = l2_normalize(EmbeddingSet(data=rng.standard_normal((5, 7))))
        s = cosine_similarity(q, q)
        np.testing.assert_allclose(np.diag(s.scores), 1.0, atol=1e-12)

    def test_orthogonal_and_opposite(self):
        q = EmbeddingSet(data=np.array([[1.0, 0.0]]))
        g = EmbeddingSet(data=np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]))
        np.testing.assert_allclose(cosine_similarity(q, g).scores, [[1.0, 0.0, -1.0]], atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine_similarity(
                EmbeddingSet(data=np.ones((2, 3))), EmbeddingSet(data=np.ones((2, 4)))
            )

    def test_entries_bounded_for_unit_inputs(self, rng):
        q = l2_normalize(EmbeddingSet(data=rng.standard_normal((8, 5))))
        g = l2_normalize(EmbeddingSet(data=rng.standard_normal((9, 5))))
        s = cosine_similarity(q, g).scores
        assert np.all(s <= 1 + 1e-12) and np.all(s >= -1 - 1e-12)


class TestSoftmax:
    def test_log_three(self):
        np.testing.assert_allclose(softmax(np.array([0.0, np.log(3)])), [0.25, 0.75], atol=1e-12)

    def test_zero_scale_uniform(self, rng):
        v = rng.standard_normal(7)
        np.testing.assert_allclose(softmax(v, scale=1e-300), np.full(7, 1 / 7), atol=1e-12)

    def test_constant_input(self):
        np.testing.assert_allclose(softmax(np.array([10.0, 10.0, 10.0]), scale=5.0), 1 / 3)

    def test_non_finite_raises(self):
        with pytest.raises(NonFiniteInput):
            softmax(np.array([1.0, np.inf]))

    @given(finite_vectors, st.floats(-100, 100, allow_nan=False))
    def test_shift_invariance(self, v, c):
        np.testing.assert_allclose(softmax(v + c), softmax(v), atol=1e-12)

    @given(finite_vectors)
    def test_sums_to_one(self, v):
        assert abs(softmax(v, scale=3.0).sum() - 1.0) < 1e-9

    def test_entropy_nonincreasing_in_scale(self, rng):
        for _ in range(20):
            v = rng.standard_normal(12)
            ents = [entropy(softmax(v, scale=s)) for s in (0.1, 1.0, 10.0, 100.0)]
            assert all(a >= b - 1e-12 for a, b in zip(ents, ents[1:]))


class TestEntropy:
    def test_uniform_two(self):
        assert abs(entropy(np.array([0.5, 0.5])) - np.log(2)) < 1e-12

    def test_one_hot(self):
        assert entropy(np.array([0.0, 1.0, 0.0])) == 0.0

    def test_uniform_thousand(self):
        assert abs(entropy(np.full(1000, 1e-3)) - np.log(1000)) < 1e-9

    def test_rowwise(self, rng):
        p = softmax(rng.standard_normal((4, 6)), axis=1)
        h = entropy(p, axis=1)
        assert h.shape == (4,) and np.all(h >= 0) and np.all(h <= np.log(6) + 1e-9)


class TestProbabilityRow:
    def test_from_scores_valid(self, rng):
        row = ProbabilityRow.from_scores(rng.standard_normal(10), tau=0.02)
        row.validate()

    def test_invalid_rejected(self):
        with pytest.raises(ValueError):
            ProbabilityRow(p=np.array([0.7, 0.7]), entropy=0.1).validate()


class TestRankRows:
    def test_descending_with_stable_ties(self):
        out = rank_rows(np.array([[0.5, 0.9, 0.5], [0.1, 0.1, 0.1]]))
        np.testing.assert_array_equal(out, [[1, 0, 2], [0, 1, 2]])
