"""Attribute-subset enumeration, value-tuple ranking and the flat parameter layout.

Every model in the package stores its per-(class, subset, value-tuple)
quantities in one flat vector. The layout is::

    [ class_0 .. class_{C-1} | class 0: block(α_0) block(α_1) ... | class 1: ... ]

where the subsets α are all size-``n`` attribute subsets in lexicographic
order and ``block(α)`` has one slot per joint value of the attributes in α
(mixed-radix rank, first attribute most significant).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

MAX_PARAMETERS = 2**40


@dataclass(frozen=True)
class SubsetCatalog:
    """All ``C(a, n)`` attribute subsets of size ``n``, lexicographically ordered."""

    a: int
    n: int
    subsets: tuple[tuple[int, ...], ...]
    rank: dict[tuple[int, ...], int] = field(repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.subsets)

    def index_array(self) -> np.ndarray:
        """Subsets as an integer array of shape ``(len(self), n)``."""
        return np.array(self.subsets, dtype=np.intp).reshape(len(self.subsets), self.n)


def enumerate_subsets(a: int, n: int) -> SubsetCatalog:
    if n < 1:
        raise ValueError(f"subset size must be >= 1, got {n}")
    if n > a:
        raise ValueError(f"subset size {n} exceeds attribute count {a}")
    subsets = tuple(itertools.combinations(range(a), n))
    return SubsetCatalog(a=a, n=n, subsets=subsets, rank={s: i for i, s in enumerate(subsets)})


def value_tuple_index(subset: Sequence[int], values: Sequence[int], cardinalities: Sequence[int]) -> int:
    """Mixed-radix rank of ``values[subset]``; the first subset attribute is most significant."""
    r = 0
    for i in subset:
        v, k = int(values[i]), int(cardinalities[i])
        if not 0 <= v < k:
            raise ValueError(f"value {v} out of range for attribute {i} with cardinality {k}")
        r = r * k + v
    return r


def value_tuple_from_index(subset: Sequence[int], rank: int, cardinalities: Sequence[int]) -> dict[int, int]:
    """Inverse of :func:`value_tuple_index`; returns ``{attribute: value}``."""
    space = subset_space_size(subset, cardinalities)
    if not 0 <= rank < space:
        raise ValueError(f"rank {rank} out of range for value space of size {space}")
    out: dict[int, int] = {}
    for i in reversed(subset):
        k = int(cardinalities[i])
        rank, out[i] = divmod(rank, k)
    return {i: out[i] for i in subset}


def subset_space_size(subset: Sequence[int], cardinalities: Sequence[int]) -> int:
    return math.prod(int(cardinalities[i]) for i in subset)


def tuple_ranks(X: np.ndarray, catalog: SubsetCatalog, cardinalities: Sequence[int]) -> np.ndarray:
    """Vectorised :func:`value_tuple_index` for every row of ``X`` and every subset.

    Returns an ``(N, len(catalog))`` array. Values outside the cardinality
    range are not checked here; callers mask them (see ``models``).
    """
    X = np.asarray(X, dtype=np.int64)
    out = np.zeros((X.shape[0], len(catalog)), dtype=np.int64)
    cards = np.asarray(cardinalities, dtype=np.int64)
    for j, subset in enumerate(catalog.subsets):
        r = np.zeros(X.shape[0], dtype=np.int64)
        for i in subset:
            r = r * cards[i] + X[:, i]
        out[:, j] = r
    return out


def anje_exponent_exact(a: int, n: int) -> Fraction:
    """``(n-1)!(a-n)!/(a-1)!`` as an exact fraction."""
    if not 1 <= n <= a:
        raise ValueError(f"need 1 <= n <= a, got n={n}, a={a}")
    return Fraction(1, partition_count(a, n))


def anje_exponent(a: int, n: int) -> float:
    """Per-subset exponent of the geometric-mean AnJE estimator.

    Equals the reciprocal of :func:`partition_count`; it is computed through
    the exact integer so nothing overflows for large ``a``.
    """
    return float(anje_exponent_exact(a, n))


def partition_count(a: int, n: int) -> int:
    """``(a-1)! / ((n-1)!(a-n)!)``, i.e. ``C(a-1, n-1)``."""
    if not 1 <= n <= a:
        raise ValueError(f"need 1 <= n <= a, got n={n}, a={a}")
    return math.comb(a - 1, n - 1)


@dataclass(frozen=True)
class ParameterLayout:
    catalog: SubsetCatalog
    cardinalities: tuple[int, ...]
    class_count: int
    block_sizes: tuple[int, ...]
    block_starts: tuple[int, ...]
    stride: int
    total_len: int

    def offset(self, c: int, j: int) -> int:
        """Index of the first slot of subset ``j``'s block for class ``c``."""
        return self.class_count + c * self.stride + self.block_starts[j]

    def offsets(self) -> np.ndarray:
        """``(class_count, len(catalog))`` array of block base indices."""
        c = np.arange(self.class_count)[:, None] * self.stride
        return self.class_count + c + np.asarray(self.block_starts, dtype=np.int64)[None, :]

    def class_slice(self, c: int) -> slice:
        start = self.class_count + c * self.stride
        return slice(start, start + self.stride)

    def block(self, vec: np.ndarray, c: int, j: int) -> np.ndarray:
        start = self.offset(c, j)
        return vec[start:start + self.block_sizes[j]]


def build_layout(catalog: SubsetCatalog, cardinalities: Sequence[int], class_count: int) -> ParameterLayout:
    cards = tuple(int(k) for k in cardinalities)
    if len(cards) != catalog.a:
        raise ValueError(f"expected {catalog.a} cardinalities, got {len(cards)}")
    if any(k < 1 for k in cards):
        raise ValueError(f"cardinalities must be positive: {cards}")
    if class_count < 1:
        raise ValueError("class_count must be positive")
    sizes = tuple(subset_space_size(s, cards) for s in catalog.subsets)
    stride = sum(sizes)
    total = class_count * (1 + stride)
    if total > MAX_PARAMETERS:
        raise ValueError(
            f"parameter layout needs {total} slots (> 2^40); reduce n or attribute cardinalities"
        )
    starts = tuple(itertools.accumulate(sizes, initial=0))[:-1]
    return ParameterLayout(
        catalog=catalog,
        cardinalities=cards,
        class_count=class_count,
        block_sizes=sizes,
        block_starts=starts,
        stride=stride,
        total_len=total,
    )
