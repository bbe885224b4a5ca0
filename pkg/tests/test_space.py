import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gametune.errors import InvalidArgument, InvalidConfiguration, TooManyRegions
from gametune.space import (SearchSpace, delinearize, linearize, partition_regions,
                            partition_subspaces)


def chunk_oracle(size, n):
    """Brute-force contiguous chunking: earlier chunks take the remainder."""
    return [len(c) for c in np.array_split(np.arange(size), n)]


def test_linearize_examples(space23):
    assert linearize(space23, (0, 0)) == 0
    assert linearize(space23, (1, 2)) == 5
    assert linearize(space23, (1, 0)) == 3


def test_linearize_matches_row_major_enumeration(space23):
    for pos, idx in enumerate(itertools.product(range(2), range(3))):
        assert linearize(space23, idx) == pos


def test_delinearize_examples(space23):
    assert delinearize(space23, 0).indices == (0, 0)
    assert delinearize(space23, 5).indices == (1, 2)
    assert delinearize(space23, 4).indices == (1, 1)


def test_configuration_values(space23):
    assert space23.configuration(4).values(space23) == {"a": "y", "b": 2}


@pytest.mark.parametrize("bad", [(2, 0), (0, 3), (-1, 0), (0,), (0, 0, 0)])
def test_linearize_rejects_bad_indices(space23, bad):
    with pytest.raises(InvalidConfiguration):
        linearize(space23, bad)


@pytest.mark.parametrize("bad", [-1, 6, 100])
def test_delinearize_rejects_out_of_range(space23, bad):
    with pytest.raises(InvalidConfiguration):
        delinearize(space23, bad)


def test_space_validation():
    with pytest.raises(InvalidArgument):
        SearchSpace.from_dict({})
    with pytest.raises(InvalidArgument):
        SearchSpace.from_dict({"a": []})
    with pytest.raises(InvalidArgument):
        SearchSpace.from_dict({"a": [1, 1]})


def test_size_is_product():
    s = SearchSpace.from_shape([4, 5, 6])
    assert s.size == len(s) == 120 and s.dimension == 3


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=5), st.data())
def test_round_trip(shape, data):
    space = SearchSpace.from_shape(shape)
    idx = tuple(data.draw(st.integers(0, n - 1)) for n in shape)
    assert delinearize(space, linearize(space, idx)).indices == idx
    k = data.draw(st.integers(0, space.size - 1))
    assert linearize(space, delinearize(space, k).indices) == k


def test_partition_examples():
    six = SearchSpace.from_shape([6])
    p = partition_regions(six, 3)
    assert p.sizes == [2, 2, 2] and p.region_of(4) == 2
    assert partition_regions(SearchSpace.from_shape([7]), 3).sizes == [3, 2, 2]
    assert partition_regions(six, 6).sizes == [1] * 6


def test_subspace_examples():
    assert partition_subspaces(SearchSpace.from_shape([10, 100]), 10).sizes == [100] * 10
    sizes = partition_subspaces(SearchSpace.from_shape([7, 11, 13]), 10).sizes
    assert sorted(sizes) == [100] * 9 + [101]
    whole = partition_subspaces(SearchSpace.from_shape([5, 5]), 1)
    assert whole.members(0) == range(25)


def test_partition_errors():
    s = SearchSpace.from_shape([4])
    with pytest.raises(TooManyRegions):
        partition_regions(s, 5)
    with pytest.raises(InvalidArgument):
        partition_regions(s, 0)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 3000), st.data())
def test_partition_matches_chunk_oracle(size, data):
    n = data.draw(st.integers(1, size))
    p = partition_regions(SearchSpace.from_shape([size]), n)
    assert p.sizes == chunk_oracle(size, n)
    assert max(p.sizes) - min(p.sizes) <= 1
    covered = [i for r in range(n) for i in p.members(r)]
    assert covered == list(range(size))
    for r in range(n):
        for i in (p.members(r)[0], p.members(r)[-1]):
            assert p.region_of(i) == r


def test_partition_within_subrange():
    s = SearchSpace.from_shape([100])
    p = partition_regions(s, 3, within=range(10, 20))
    assert [list(p.members(r)) for r in range(3)] == [
        list(range(10, 14)), list(range(14, 17)), list(range(17, 20))]


def test_partition_deterministic():
    s = SearchSpace.from_shape([37])
    assert partition_regions(s, 5).assignment == partition_regions(s, 5).assignment
