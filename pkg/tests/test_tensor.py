import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aleatoric_ehr.errors import DimensionError, DomainError, NumericalError
from aleatoric_ehr.tensor import RngStream, log_sum_exp, matmul, sample_standard_normal, softmax


def loop_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    c = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            c[i, j] = acc
    return c


class TestMatmul:
    def test_identity(self):
        v = np.array([[1.5], [-2.0], [3.25]])
        assert np.array_equal(matmul(np.eye(3), v), v)

    def test_zeros(self):
        b = np.random.default_rng(0).standard_normal((2, 5))
        assert np.array_equal(matmul(np.zeros((2, 2)), b), np.zeros((2, 5)))

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        a, b = rng.standard_normal((4, 3)), rng.standard_normal((3, 2))
        # k = 3 accumulates in the same left-to-right order as the loop
        np.testing.assert_allclose(matmul(a, b), loop_matmul(a, b), rtol=1e-15, atol=0)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_overflow_raises(self):
        with pytest.raises(NumericalError):
            matmul(np.full((1, 2), 1e200), np.full((2, 1), 1e200))

    def test_associative(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a, b, c = rng.standard_normal((5, 4)), rng.standard_normal((4, 6)), rng.standard_normal((6, 3))
            left = matmul(matmul(a, b), c)
            right = matmul(a, matmul(b, c))
            scale = np.abs(a) @ np.abs(b) @ np.abs(c)
            assert np.all(np.abs(left - right) <= 1e-9 * scale)


class TestLogSumExp:
    def test_two_zeros(self):
        assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2), abs=1e-15)

    def test_no_overflow(self):
        assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(1000 + math.log(2), abs=1e-12)

    def test_matches_direct_in_safe_range(self):
        x = np.random.default_rng(3).uniform(-5, 5, 10)
        assert abs(log_sum_exp(x) - math.log(np.sum(np.exp(x)))) < 1e-12

    def test_empty(self):
        with pytest.raises(DomainError):
            log_sum_exp([])

    @settings(max_examples=200)
    @given(
        arrays(np.float64, st.integers(1, 20), elements=st.floats(-50, 50)),
        st.floats(-100, 100),
    )
    def test_shift_identity(self, x, c):
        assert abs(log_sum_exp(x + c) - (log_sum_exp(x) + c)) <= 1e-12 * max(1.0, abs(c) + np.abs(x).max())


def test_softmax_basic():
    np.testing.assert_array_equal(softmax([0.0, 0.0]), [0.5, 0.5])
    p = softmax([1000.0, 0.0])
    assert np.all(np.isfinite(p)) and p[0] == 1.0 and 0 <= p[1] < 1e-300


class TestRng:
    def test_same_seed_same_draws(self):
        assert np.array_equal(sample_standard_normal(RngStream(42), (3, 4)), sample_standard_normal(RngStream(42), (3, 4)))

    def test_golden_vector(self):
        # PCG64 via SeedSequence(42); equals numpy.random.default_rng(42)
        assert sample_standard_normal(RngStream(42), 4).tolist() == [
            0.30471707975443135,
            -1.0399841062404955,
            0.7504511958064572,
            0.9405647163912139,
        ]
        assert RngStream(42).child("dropout", 3).standard_normal(3).tolist() == [
            -1.3799889863897346,
            2.213851175937957,
            0.2691773555582117,
        ]
        assert RngStream(42).derive_seed("member", 1) == 1829581914079370774

    def test_moments(self):
        x = sample_standard_normal(RngStream(7), 10**6)
        assert abs(x.mean()) < 4e-3
        assert abs(x.var() - 1.0) < 1e-2

    def test_empty_shape(self):
        assert sample_standard_normal(RngStream(0), (0,)).shape == (0,)

    def test_children_do_not_advance_parent(self):
        root = RngStream(5)
        root.child("a").standard_normal(10)
        assert root.standard_normal(2).tolist() == RngStream(5).standard_normal(2).tolist()

    def test_children_differ(self):
        a = RngStream(5).child("init").standard_normal(5)
        b = RngStream(5).child("dropout").standard_normal(5)
        assert not np.array_equal(a, b)

    def test_bad_seed(self):
        with pytest.raises(DomainError):
            RngStream(-1)
