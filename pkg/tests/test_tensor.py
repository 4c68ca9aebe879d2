import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from echopipe import tensor
from echopipe.errors import NumericError, ShapeError


def test_zeros():
    np.testing.assert_array_equal(tensor.zeros([2, 2]), [[0, 0], [0, 0]])


def test_fill_and_width_switch():
    assert tensor.fill([3], 2.5, bits=64).dtype == np.float64
    assert tensor.zeros([3]).dtype == np.float32
    tensor.set_default_width(64)
    try:
        assert tensor.zeros([1]).dtype == np.float64
    finally:
        tensor.set_default_width(32)
    with pytest.raises(ValueError):
        tensor.set_default_width(16)


@pytest.mark.parametrize("shape", [[], [0], [3, -1]])
def test_invalid_shapes(shape):
    with pytest.raises(ShapeError):
        tensor.zeros(shape)


def test_overflowing_element_count():
    with pytest.raises(OverflowError):
        tensor.check_shape([2**40, 2**40])


def test_random_uniform_is_deterministic():
    a = tensor.random_uniform([3], seed=7)
    b = tensor.random_uniform([3], seed=7)
    np.testing.assert_array_equal(a, b)


def test_random_uniform_seeds_differ():
    a = tensor.random_uniform([1000], seed=1)
    b = tensor.random_uniform([1000], seed=2)
    assert np.any(a != b)


def test_random_uniform_respects_limit():
    a = tensor.random_uniform([10_000], seed=3, limit=0.25, bits=64)
    assert a.min() >= -0.25 and a.max() <= 0.25


def test_elementwise():
    np.testing.assert_array_equal(tensor.add([1, 2], [3, 4]), [4, 6])
    np.testing.assert_array_equal(tensor.sub([1, 2], [3, 4]), [-2, -2])
    x = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(tensor.mul(x, np.zeros_like(x)), np.zeros((2, 3)))
    np.testing.assert_allclose(tensor.scale(np.array([1.0, 2.0, 3.0]), 0.5), [0.5, 1.0, 1.5])


def test_no_broadcasting():
    with pytest.raises(ShapeError):
        tensor.add(np.ones((2, 1)), np.ones((2, 2)))


def test_reductions():
    assert tensor.reduce_mean([0.0, 1.0]) == 0.5
    assert tensor.reduce_sum(tensor.zeros([5, 5])) == 0
    assert tensor.reduce_max([0.2, 0.9, 0.4]) == pytest.approx(0.9)
    with pytest.raises(ShapeError):
        tensor.reduce_sum(np.zeros(0))


def test_phantom_frame_max_at_most_one():
    from echopipe.datagen import PhantomConfig, generate_phantom
    video, _ = generate_phantom(PhantomConfig(frames=2))
    assert tensor.reduce_max(video[0]) <= 1.0


def test_check_finite():
    with pytest.raises(NumericError):
        tensor.check_finite(np.array([1.0, np.nan]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=4), st.integers(0, 2**31 - 1))
def test_row_major_round_trip(shape, seed):
    a = tensor.random_uniform(shape, seed, bits=64)
    flat = a.reshape(-1)
    rng = np.random.default_rng(seed)
    idx = tuple(int(rng.integers(d)) for d in shape)
    assert flat[tensor.flat_index(shape, idx)] == a[idx]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10_000), st.integers(0, 2**31 - 1))
def test_mean_is_sum_over_count(n, seed):
    a = tensor.random_uniform([n], seed, bits=64)
    assert abs(tensor.reduce_mean(a) - tensor.reduce_sum(a) / n) <= 1e-12
    # fixed seed: the sequential sum is reproducible bit for bit
    assert tensor.reduce_sum(a) == tensor.reduce_sum(tensor.random_uniform([n], seed, bits=64))
