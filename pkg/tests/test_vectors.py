import numpy as np
import pytest
from hypothesis import given, strategies as st

from lossguard.vectors import (
    RngStream,
    as_vector,
    axpy,
    coordwise_sorted,
    gaussian_sample,
    is_finite,
    sq_euclidean,
)


def test_axpy_zero_scale_identity():
    out = axpy(0.0, as_vector([3, 4]), as_vector([1, 2]))
    assert np.array_equal(out, [1.0, 2.0])


def test_axpy_additive_inverse():
    out = axpy(1.0, as_vector([1, 1]), as_vector([-1, -1]))
    assert np.array_equal(out, [0.0, 0.0])


def test_axpy_hand_arithmetic_vs_scalar_loop():
    alpha, x, y = 2.0, as_vector([1, -2]), as_vector([0.5, 0.5])
    expected = np.array([alpha * xi + yi for xi, yi in zip(x, y)])
    out = axpy(alpha, x, y)
    assert np.array_equal(out, expected)
    assert np.array_equal(out, [2.5, -3.5])


def test_axpy_dimension_mismatch():
    with pytest.raises(ValueError):
        axpy(1.0, as_vector([1, 2]), as_vector([1, 2, 3]))


@given(
    st.lists(st.integers(min_value=-1000, max_value=1000), min_size=1, max_size=20),
    st.integers(min_value=-100, max_value=100),
)
def test_axpy_exact_on_integers(ints, alpha):
    # integer-valued doubles at this scale have exact products and sums
    x = as_vector(ints)
    y = as_vector(list(reversed(ints)))
    out = axpy(float(alpha), x, y)
    expected = [alpha * a + b for a, b in zip(ints, reversed(ints))]
    assert np.array_equal(out, as_vector(expected))


def test_sq_euclidean_identity():
    v = as_vector([7, 7, 7])
    assert sq_euclidean(v, v) == 0.0


def test_sq_euclidean_345():
    assert sq_euclidean(as_vector([0, 0]), as_vector([3, 4])) == 25.0


def test_sq_euclidean_loop_oracle():
    x, y = as_vector([1, 2, 3]), as_vector([4, 0, 3])
    oracle = sum((a - b) ** 2 for a, b in zip(x, y))
    assert sq_euclidean(x, y) == oracle == 13.0


def test_sq_euclidean_symmetric_exactly():
    rng = np.random.default_rng(0)
    for _ in range(200):
        d = rng.integers(1, 12)
        x, y = rng.normal(size=d), rng.normal(size=d)
        assert sq_euclidean(x, y) == sq_euclidean(y, x)
        assert sq_euclidean(x, y) >= 0.0


def test_sq_euclidean_dimension_mismatch():
    with pytest.raises(ValueError):
        sq_euclidean(as_vector([1]), as_vector([1, 2]))


def test_coordwise_sorted_basic():
    vecs = [as_vector([2]), as_vector([1]), as_vector([3])]
    assert np.array_equal(coordwise_sorted(vecs, 0), [1, 2, 3])


def test_coordwise_sorted_second_coordinate():
    vecs = [as_vector([1, 9]), as_vector([1, 5])]
    assert np.array_equal(coordwise_sorted(vecs, 1), [5, 9])


def test_coordwise_sorted_matches_extract_then_sort_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        vecs = [as_vector(rng.normal(size=3)) for _ in range(5)]
        for j in range(3):
            oracle = sorted(v[j] for v in vecs)
            assert np.array_equal(coordwise_sorted(vecs, j), oracle)


def test_coordwise_sorted_errors():
    with pytest.raises(ValueError):
        coordwise_sorted([], 0)
    with pytest.raises(ValueError):
        coordwise_sorted([as_vector([1.0])], 1)
    with pytest.raises(ValueError):
        coordwise_sorted([as_vector([1.0]), as_vector([1.0, 2.0])], 0)


def test_gaussian_sample_degenerate_sigma():
    rng = RngStream(0, 0)
    assert np.array_equal(gaussian_sample(rng, 0.25, 0.0, 3), [0.25, 0.25, 0.25])


def test_gaussian_sample_moments():
    rng = RngStream(123, 0)
    draws = gaussian_sample(rng, 0.0, 1.0, 10**4)
    assert abs(draws.mean()) < 0.05
    assert abs(draws.var() - 1.0) < 0.05


def test_gaussian_sample_deterministic():
    a = gaussian_sample(RngStream(9, 4), 0.0, 1.0, 100)
    b = gaussian_sample(RngStream(9, 4), 0.0, 1.0, 100)
    assert np.array_equal(a, b)


def test_gaussian_sample_negative_sigma():
    with pytest.raises(ValueError):
        gaussian_sample(RngStream(0, 0), 0.0, -1.0, 3)


def test_rng_streams_distinct_ids_differ():
    a = RngStream(42, 0).normal(0, 1, 8)
    b = RngStream(42, 1).normal(0, 1, 8)
    assert not np.array_equal(a, b)


def test_rng_stream_replay_is_bit_identical():
    s1, s2 = RngStream(7, 3), RngStream(7, 3)
    for _ in range(5):
        assert np.array_equal(s1.permutation(17), s2.permutation(17))
        assert np.array_equal(s1.normal(0, 2, 11), s2.normal(0, 2, 11))


def test_rng_stream_bounds():
    with pytest.raises(ValueError):
        RngStream(-1, 0)
    with pytest.raises(ValueError):
        RngStream(0, 2**64)


def test_is_finite_reports_exactly():
    assert is_finite(as_vector([0.0, 1.0, -1e308]))
    assert not is_finite(as_vector([0.0, np.nan]))
    assert not is_finite(as_vector([np.inf, 0.0]))
    assert not is_finite(as_vector([-np.inf]))
