import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dysonsim.errors import BudgetError
from dysonsim.rng import RngStream, as_generator


def test_streams_are_reproducible():
    a = RngStream(7, 3).block(5).random(10)
    b = RngStream(7, 3).block(5).random(10)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize(
    "other", [RngStream(8, 3).block(5), RngStream(7, 4).block(5), RngStream(7, 3).block(6), RngStream(7, 3).sample(5)]
)
def test_streams_are_distinct(other):
    assert not np.array_equal(RngStream(7, 3).block(5).random(10), other.random(10))


def test_child_streams():
    root = RngStream(1, 0)
    assert root.child(2) == root.child(2)
    assert root.child(2) != root.child(3)
    assert root.child(2).seed == 1


def test_range_checks():
    with pytest.raises(BudgetError):
        RngStream(-1)
    with pytest.raises(BudgetError):
        RngStream(1, 2**64)
    with pytest.raises(BudgetError):
        RngStream(1).block(2**64)


def test_as_generator():
    g = np.random.default_rng(0)
    assert as_generator(g) is g
    assert isinstance(as_generator(RngStream(1)), np.random.Generator)
    assert isinstance(as_generator(5), np.random.Generator)


@given(st.integers(min_value=0, max_value=2**64 - 1), st.integers(min_value=0, max_value=2**64 - 1))
def test_uniform_range(seed, stream):
    u = RngStream(seed, stream).block(0).random(64)
    assert np.all((u >= 0) & (u < 1))
