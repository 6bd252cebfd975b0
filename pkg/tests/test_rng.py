import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fenelab import rng
from fenelab.errors import InvalidArgument


def test_same_address_same_numbers():
    a = rng.normals(1, rng.FLOW, 5, 100, 3)
    b = rng.normals(1, rng.FLOW, 5, 100, 3)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("other", [(2, rng.FLOW, 5), (1, rng.THERMAL, 5), (1, rng.FLOW, 6)])
def test_different_address_different_numbers(other):
    a = rng.normals(1, rng.FLOW, 5, 100, 3)
    b = rng.normals(*other, 100, 3)
    assert not np.any(a == b)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3 * rng.BLOCK), st.integers(0, 2**64 - 1), st.integers(0, 10**6))
def test_prefix_stable_in_particle_count(n, seed, step):
    # a particle's numbers do not depend on how many particles exist
    full = rng.normals(seed, rng.THERMAL, step, 3 * rng.BLOCK, 2)
    part = rng.normals(seed, rng.THERMAL, step, n, 2)
    np.testing.assert_array_equal(part, full[:n])


def test_blocks_are_distinct_streams():
    x = rng.normals(0, rng.FLOW, 0, 2 * rng.BLOCK, 1)[:, 0]
    assert not np.array_equal(x[:rng.BLOCK], x[rng.BLOCK:])
    assert abs(np.corrcoef(x[:rng.BLOCK], x[rng.BLOCK:])[0, 1]) < 0.05


def test_moments():
    x = rng.normals(3, rng.FLOW, 1, 200_000, 1)[:, 0]
    assert abs(x.mean()) < 0.01 and abs(x.var() - 1) < 0.02
    u = rng.uniforms(3, rng.INIT, 0, 200_000, 1)
    assert u.min() >= 0 and u.max() < 1 and abs(u.mean() - 0.5) < 0.005


def test_shared_normals():
    a = rng.shared_normals(9, rng.FLOW, 3, 50)
    np.testing.assert_array_equal(a, rng.shared_normals(9, rng.FLOW, 3, 50))
    assert not np.array_equal(a, rng.shared_normals(9, rng.FLOW, 4, 50))


def test_seed_range():
    with pytest.raises(InvalidArgument):
        rng.generator(-1, rng.FLOW)
    with pytest.raises(InvalidArgument):
        rng.generator(2**64, rng.FLOW)
    rng.generator(2**64 - 1, rng.FLOW)
