"""Joint count tables over all size-``n`` attribute subsets and their MAP estimates.

Counts and log-probabilities share the flat :class:`~dbl.combinatorics.ParameterLayout`
so that a probability table can be multiplied element-wise with a weight
vector: the first ``class_count`` slots hold class quantities and the
per-(class, subset) blocks hold joint quantities.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .combinatorics import (
    ParameterLayout,
    SubsetCatalog,
    build_layout,
    enumerate_subsets,
    tuple_ranks,
    value_tuple_index,
)
from .dataset import DiscretizedDataset


@dataclass(frozen=True)
class CountTable:
    layout: ParameterLayout
    t: int
    counts: np.ndarray  # int64, layout.total_len; class slots hold #_y

    @property
    def class_counts(self) -> np.ndarray:
        return self.counts[: self.layout.class_count]

    def block(self, c: int, j: int) -> np.ndarray:
        return self.layout.block(self.counts, c, j)

    @property
    def n(self) -> int:
        return self.layout.catalog.n

    @property
    def catalog(self) -> SubsetCatalog:
        return self.layout.catalog


@dataclass(frozen=True)
class ProbabilityTables:
    layout: ParameterLayout
    log_probs: np.ndarray  # float64, layout.total_len; class slots hold log π_y
    m: float

    @property
    def log_prior(self) -> np.ndarray:
        return self.log_probs[: self.layout.class_count]

    def log_theta(self, c: int, j: int) -> np.ndarray:
        return self.layout.block(self.log_probs, c, j)


def _scatter_counts(layout: ParameterLayout, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    C, stride = layout.class_count, layout.stride
    counts = np.bincount(y, minlength=C).astype(np.int64)
    if len(y) == 0:
        return np.concatenate([counts, np.zeros(C * stride, dtype=np.int64)])
    ranks = tuple_ranks(X, layout.catalog, layout.cardinalities)
    flat = ranks + np.asarray(layout.block_starts, dtype=np.int64)[None, :]
    flat = flat + (y * stride)[:, None]
    joint = np.bincount(flat.ravel(), minlength=C * stride).astype(np.int64)
    return np.concatenate([counts, joint])


def accumulate(
    data: DiscretizedDataset,
    catalog: SubsetCatalog,
    *,
    shards: int = 1,
    threads: int = 1,
) -> CountTable:
    """Count ``#_y`` and ``#_{x_α, y}`` for every subset in ``catalog``.

    With ``shards > 1`` the instances are split into contiguous ranges that
    are counted independently (on ``threads`` workers) and merged in shard
    order.
    """
    if catalog.a != data.a:
        raise ValueError(f"catalog is for {catalog.a} attributes, data has {data.a}")
    layout = build_layout(catalog, data.cardinalities, data.class_count)
    if shards <= 1:
        return CountTable(layout=layout, t=len(data), counts=_scatter_counts(layout, data.X, data.y))
    bounds = np.array_split(np.arange(len(data)), shards)
    parts = [data.take(b) for b in bounds]

    def count(part: DiscretizedDataset) -> CountTable:
        return CountTable(layout=layout, t=len(part), counts=_scatter_counts(layout, part.X, part.y))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            tables = list(pool.map(count, parts))
    else:
        tables = [count(p) for p in parts]
    out = tables[0]
    for tab in tables[1:]:
        out = merge(out, tab)
    return out


def empty_counts(layout: ParameterLayout) -> CountTable:
    return CountTable(layout=layout, t=0, counts=np.zeros(layout.total_len, dtype=np.int64))


def merge(lhs: CountTable, rhs: CountTable) -> CountTable:
    a, b = lhs.layout, rhs.layout
    if (
        a.cardinalities != b.cardinalities
        or a.class_count != b.class_count
        or a.catalog.n != b.catalog.n
        or a.catalog.a != b.catalog.a
    ):
        raise ValueError("cannot merge count tables with different shapes")
    return CountTable(layout=lhs.layout, t=lhs.t + rhs.t, counts=lhs.counts + rhs.counts)


def map_estimates(counts: CountTable, m: float = 1.0) -> ProbabilityTables:
    """Dirichlet MAP estimates in log space.

    ``π_y = (#_y + m/|Y|) / (t + m)`` and
    ``θ_{x_α|y} = (#_{x_α,y} + m/s_α) / (#_y + m)`` with ``s_α`` the size of
    the subset's joint value space.
    """
    if m <= 0:
        raise ValueError("smoothing m must be positive")
    layout = counts.layout
    C = layout.class_count
    cy = counts.class_counts.astype(float)
    out = np.empty(layout.total_len, dtype=float)
    out[:C] = np.log((cy + m / C) / (counts.t + m))
    for c in range(C):
        for j, s in enumerate(layout.block_sizes):
            start = layout.offset(c, j)
            block = counts.counts[start:start + s].astype(float)
            out[start:start + s] = np.log((block + m / s) / (cy[c] + m))
    return ProbabilityTables(layout=layout, log_probs=out, m=float(m))


# ----------------------------------------------------------------------------
# statistic key sets, used to check that AnJE(n) and A(n-1)DE need the same counts

def anje_statistic_keys(layout: ParameterLayout) -> set[tuple[tuple[int, ...], int, int]]:
    """``(subset, tuple rank, class)`` for every joint count an AnJE model reads."""
    keys = set()
    for j, subset in enumerate(layout.catalog.subsets):
        for r in range(layout.block_sizes[j]):
            for c in range(layout.class_count):
                keys.add((subset, r, c))
    return keys


def ande_statistic_keys(
    a: int, parents: int, cardinalities, class_count: int
) -> set[tuple[tuple[int, ...], int, int]]:
    """Joint counts an A(parents)DE model reads, enumerated from its sub-model structure.

    Each sub-model has a superparent set ``s`` and, for every other attribute
    ``i``, reads ``#(x_s, x_i, y)``; ``#(x_s, y)`` is a marginal of those.
    """
    keys = set()
    for s in itertools.combinations(range(a), parents):
        for i in range(a):
            if i in s:
                continue
            joint = tuple(sorted(s + (i,)))
            for values in itertools.product(*(range(cardinalities[k]) for k in joint)):
                x = dict(zip(joint, values))
                full = [x.get(k, 0) for k in range(a)]
                for c in range(class_count):
                    keys.add((joint, value_tuple_index(joint, full, cardinalities), c))
    return keys


def counts_for(data: DiscretizedDataset, n: int) -> CountTable:
    return accumulate(data, enumerate_subsets(data.a, n))
