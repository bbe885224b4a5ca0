"""Discrete search spaces, their row-major linearization, and contiguous partitions."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterator, Mapping, Sequence

from .errors import InvalidArgument, InvalidConfiguration, TooManyRegions


@dataclass(frozen=True)
class ParameterDef:
    name: str
    values: tuple

    def __post_init__(self):
        values = tuple(self.values)
        object.__setattr__(self, "values", values)
        if not self.name:
            raise InvalidArgument("parameter name must be non-empty")
        if not values:
            raise InvalidArgument(f"parameter {self.name!r} has no values")
        if len(set(map(repr, values))) != len(values):
            raise InvalidArgument(f"parameter {self.name!r} has duplicate values")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class Configuration:
    indices: tuple[int, ...]
    linear_index: int

    def values(self, space: "SearchSpace") -> dict[str, Any]:
        return {p.name: p.values[i] for p, i in zip(space.params, self.indices)}


class SearchSpace:
    """Cartesian product of discrete parameters.

    Configurations are numbered in row-major order over the declared parameter
    order: the last parameter varies fastest.
    """

    def __init__(self, params: Sequence[ParameterDef]):
        params = tuple(params)
        if not params:
            raise InvalidArgument("a search space needs at least one parameter")
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise InvalidArgument("duplicate parameter names")
        self.params = params
        self.shape = tuple(len(p) for p in params)
        self.size = math.prod(self.shape)
        # strides for row-major order
        strides = []
        acc = 1
        for n in reversed(self.shape):
            strides.append(acc)
            acc *= n
        self.strides = tuple(reversed(strides))

    @classmethod
    def from_dict(cls, spec: Mapping[str, Sequence[Any]]) -> "SearchSpace":
        return cls([ParameterDef(name, tuple(values)) for name, values in spec.items()])

    @classmethod
    def from_shape(cls, shape: Sequence[int]) -> "SearchSpace":
        """Anonymous space whose values are the integer indices themselves."""
        return cls([ParameterDef(f"p{i}", tuple(range(n))) for i, n in enumerate(shape)])

    @property
    def dimension(self) -> int:
        return len(self.params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"SearchSpace(shape={self.shape})"

    def __eq__(self, other) -> bool:
        return isinstance(other, SearchSpace) and self.params == other.params

    def __hash__(self) -> int:
        return hash(self.params)

    def configuration(self, linear_index: int) -> Configuration:
        return delinearize(self, linear_index)

    def __iter__(self) -> Iterator[Configuration]:
        for i in range(self.size):
            yield delinearize(self, i)

    def to_dict(self) -> dict[str, list]:
        return {p.name: list(p.values) for p in self.params}


def linearize(space: SearchSpace, indices: Sequence[int]) -> int:
    if len(indices) != space.dimension:
        raise InvalidConfiguration(
            f"expected {space.dimension} indices, got {len(indices)}")
    out = 0
    for name, i, n, stride in zip(space.names, indices, space.shape, space.strides):
        if not 0 <= i < n:
            raise InvalidConfiguration(f"index {i} out of range for {name!r} (0..{n - 1})")
        out += int(i) * stride
    return out


def delinearize(space: SearchSpace, linear_index: int) -> Configuration:
    if not 0 <= linear_index < space.size:
        raise InvalidConfiguration(
            f"linear index {linear_index} outside [0, {space.size})")
    rem = int(linear_index)
    indices = []
    for stride in space.strides:
        q, rem = divmod(rem, stride)
        indices.append(q)
    return Configuration(tuple(indices), int(linear_index))


@dataclass(frozen=True)
class RegionPartition:
    """Equal split of the index range ``[start, stop)`` into contiguous chunks.

    The first ``size % n_r`` regions hold one extra configuration.
    """

    n_r: int
    start: int
    stop: int

    @property
    def total(self) -> int:
        return self.stop - self.start

    @property
    def _q_rem(self) -> tuple[int, int]:
        return divmod(self.total, self.n_r)

    def region_of(self, linear_index: int) -> int:
        if not self.start <= linear_index < self.stop:
            raise InvalidConfiguration(f"linear index {linear_index} outside partition")
        q, rem = self._q_rem
        offset = linear_index - self.start
        big = rem * (q + 1)
        if offset < big:
            return offset // (q + 1)
        return rem + (offset - big) // q

    def members(self, region: int) -> range:
        if not 0 <= region < self.n_r:
            raise InvalidArgument(f"region {region} outside 0..{self.n_r - 1}")
        q, rem = self._q_rem
        lo = self.start + region * q + min(region, rem)
        hi = lo + q + (1 if region < rem else 0)
        return range(lo, hi)

    @property
    def sizes(self) -> list[int]:
        q, rem = self._q_rem
        return [q + 1] * rem + [q] * (self.n_r - rem)

    @property
    def assignment(self) -> dict[int, int]:
        return {i: self.region_of(i) for i in range(self.start, self.stop)}


def _partition(total_range: range, n: int) -> RegionPartition:
    if n < 1:
        raise InvalidArgument("partition count must be at least 1")
    if n > len(total_range):
        raise TooManyRegions(f"{n} regions requested for {len(total_range)} configurations")
    return RegionPartition(n, total_range.start, total_range.stop)


def partition_regions(space: SearchSpace, n_r: int, within: range | None = None) -> RegionPartition:
    """Split the space (or the sub-range ``within``) into ``n_r`` contiguous regions."""
    return _partition(within if within is not None else range(space.size), n_r)


def partition_subspaces(space: SearchSpace, n_sub: int) -> RegionPartition:
    return _partition(range(space.size), n_sub)
