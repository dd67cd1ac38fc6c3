"""Scoring for AnJE, AnDE, DBL^n and LR^n.

AnJE, DBL^n and LR^n are all log-linear in the flat layout: each class
score is one class coefficient plus one coefficient per subset, picked by
the instance's value tuple. They differ only in how the coefficients are
formed::

    AnJE   β = (1, e, e, ...) ⊙ L        e = anje_exponent(a, n)
    DBL^n  β = w ⊙ L                      L = MAP log-probabilities
    LR^n   β

Posteriors are returned as normalised natural-log probabilities with shape
``(C,)`` for one instance or ``(N, C)`` for a batch.

A value index at or beyond the model's cardinality for its attribute (a
reserved index first allocated at prediction time) has no parameter; every
subset term containing it is dropped for all classes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .combinatorics import (
    ParameterLayout,
    SubsetCatalog,
    anje_exponent,
    build_layout,
    enumerate_subsets,
    tuple_ranks,
)
from .statistics import CountTable, ProbabilityTables


def _as_batch(X) -> tuple[np.ndarray, bool]:
    X = np.asarray(X, dtype=np.int64)
    if X.ndim == 1:
        return X[None, :], True
    return X, False


@dataclass(frozen=True)
class Design:
    """Per-instance slot indices into one class's stride of a layout."""

    base: np.ndarray  # (N, J) block_start + tuple rank; 0 where masked
    valid: np.ndarray  # (N, J) bool

    @property
    def all_valid(self) -> bool:
        return bool(self.valid.all())


def design(layout: ParameterLayout, X) -> Design:
    X = np.asarray(X, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] != layout.catalog.a:
        raise ValueError(f"expected instances with {layout.catalog.a} attributes, got shape {X.shape}")
    if (X < 0).any():
        raise ValueError("negative value index")
    cards = np.asarray(layout.cardinalities, dtype=np.int64)
    in_range = X < cards[None, :]
    if len(layout.catalog):
        sub = layout.catalog.index_array()
        valid = in_range[:, sub].all(axis=2)
    else:
        valid = np.ones((X.shape[0], 0), dtype=bool)
    ranks = tuple_ranks(np.where(in_range, X, 0), layout.catalog, layout.cardinalities)
    base = np.where(valid, ranks + np.asarray(layout.block_starts, dtype=np.int64)[None, :], 0)
    return Design(base=base, valid=valid)


def linear_scores(layout: ParameterLayout, coef: np.ndarray, d: Design) -> np.ndarray:
    """Unnormalised class scores ``β_c + Σ_α β_{c,α,x_α}``, shape ``(N, C)``."""
    coef = np.asarray(coef, dtype=float)
    if coef.shape != (layout.total_len,):
        raise ValueError(f"parameter vector has shape {coef.shape}, layout needs ({layout.total_len},)")
    C, stride = layout.class_count, layout.stride
    N = d.base.shape[0]
    scores = np.empty((N, C))
    for c in range(C):
        block = coef[C + c * stride: C + (c + 1) * stride]
        terms = block[d.base]
        if not d.all_valid:
            terms = np.where(d.valid, terms, 0.0)
        scores[:, c] = coef[c] + terms.sum(axis=1)
    return scores


def normalize(scores: np.ndarray) -> np.ndarray:
    return scores - logsumexp(scores, axis=-1, keepdims=True)


def _log_posterior(layout: ParameterLayout, coef: np.ndarray, X) -> np.ndarray:
    Xb, single = _as_batch(X)
    out = normalize(linear_scores(layout, coef, design(layout, Xb)))
    return out[0] if single else out


def predict(logp: np.ndarray) -> np.ndarray | int:
    """Most probable class; ties go to the smallest class index."""
    logp = np.asarray(logp)
    if logp.ndim == 1:
        return int(np.argmax(logp))
    return np.argmax(logp, axis=1)


# ----------------------------------------------------------------------------
# AnJE

def anje_coefficients(tables: ProbabilityTables) -> np.ndarray:
    layout = tables.layout
    e = anje_exponent(layout.catalog.a, layout.catalog.n)
    coef = tables.log_probs * e
    coef[: layout.class_count] = tables.log_prior
    return coef


@dataclass(frozen=True)
class AnjeModel:
    tables: ProbabilityTables

    @property
    def layout(self) -> ParameterLayout:
        return self.tables.layout

    @property
    def catalog(self) -> SubsetCatalog:
        return self.layout.catalog

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return self.layout.cardinalities

    @property
    def exponent(self) -> float:
        return anje_exponent(self.catalog.a, self.catalog.n)

    @cached_property
    def coefficients(self) -> np.ndarray:
        return anje_coefficients(self.tables)

    def log_posterior(self, X) -> np.ndarray:
        return _log_posterior(self.layout, self.coefficients, X)


def anje_log_posterior(model: AnjeModel, x) -> np.ndarray:
    return model.log_posterior(x)


# ----------------------------------------------------------------------------
# DBL^n / LR^n

def to_lr(tables: ProbabilityTables, w: np.ndarray) -> np.ndarray:
    """``β = w ⊙ log-probabilities``: the LR^n point equivalent to DBL^n weights ``w``."""
    w = np.asarray(w, dtype=float)
    if w.shape != tables.log_probs.shape:
        raise ValueError(f"weights have shape {w.shape}, tables need {tables.log_probs.shape}")
    return w * tables.log_probs


def dbl_log_posterior(tables: ProbabilityTables, w: np.ndarray, x) -> np.ndarray:
    """``w_y log π_y + Σ_α w_{y,α,x_α} log θ_{x_α|y}``, normalised.

    Gathers weights and log-probabilities separately and multiplies per term,
    so it does not go through :func:`to_lr`.
    """
    layout = tables.layout
    w = np.asarray(w, dtype=float)
    if w.shape != (layout.total_len,):
        raise ValueError(f"weights have shape {w.shape}, layout needs ({layout.total_len},)")
    Xb, single = _as_batch(x)
    d = design(layout, Xb)
    L = tables.log_probs
    C, stride = layout.class_count, layout.stride
    scores = np.empty((Xb.shape[0], C))
    for c in range(C):
        idx = C + c * stride + d.base
        terms = np.where(d.valid, w[idx] * L[idx], 0.0)
        scores[:, c] = w[c] * L[c] + terms.sum(axis=1)
    out = normalize(scores)
    return out[0] if single else out


def lr_log_posterior(layout: ParameterLayout, beta: np.ndarray, x) -> np.ndarray:
    return _log_posterior(layout, beta, x)


@dataclass(frozen=True)
class DblModel:
    tables: ProbabilityTables
    weights: np.ndarray

    @property
    def layout(self) -> ParameterLayout:
        return self.tables.layout

    @cached_property
    def coefficients(self) -> np.ndarray:
        return to_lr(self.tables, self.weights)

    def log_posterior(self, X) -> np.ndarray:
        return _log_posterior(self.layout, self.coefficients, X)


@dataclass(frozen=True)
class LrModel:
    layout: ParameterLayout
    beta: np.ndarray

    @property
    def coefficients(self) -> np.ndarray:
        return self.beta

    def log_posterior(self, X) -> np.ndarray:
        return _log_posterior(self.layout, self.beta, X)


# ----------------------------------------------------------------------------
# AnDE

@dataclass(frozen=True)
class AndeModel:
    """A(n-1)DE built from the same size-``n`` joint counts that AnJE(n) uses.

    Each superparent set ``s`` of ``n-1`` attributes contributes the
    sub-model ``P(y, x_s) Π_{i∉s} P(x_i | y, x_s)``; the posterior is
    proportional to their arithmetic mean. ``#(x_s, y)`` is obtained by
    marginalising the joint block of ``s ∪ {i}`` for the first ``i ∉ s``.
    When ``a = n - 1`` there are no size-``n`` subsets, and ``parent_counts``
    must be supplied directly (the whole instance is the superparent).
    """

    counts: CountTable | None
    m: float
    parent_layout: ParameterLayout
    parent_counts: np.ndarray  # int64 over parent_layout
    t: int

    @property
    def parents(self) -> int:
        return self.parent_layout.catalog.n

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return self.parent_layout.cardinalities

    @classmethod
    def from_counts(cls, counts: CountTable, m: float = 1.0) -> "AndeModel":
        n = counts.layout.catalog.n
        if n < 2:
            raise ValueError("A(n-1)DE needs joint statistics with n >= 2 (A0DE is not supported)")
        layout = counts.layout
        a, cards, C = layout.catalog.a, layout.cardinalities, layout.class_count
        parent_cat = enumerate_subsets(a, n - 1)
        plan = build_layout(parent_cat, cards, C)
        pc = np.zeros(plan.total_len, dtype=np.int64)
        pc[:C] = counts.class_counts
        for k, s in enumerate(parent_cat.subsets):
            child = next(i for i in range(a) if i not in s)
            joint = tuple(sorted(s + (child,)))
            j = layout.catalog.rank[joint]
            axis = joint.index(child)
            shape = [cards[i] for i in joint]
            for c in range(C):
                block = counts.block(c, j).reshape(shape)
                start = plan.offset(c, k)
                pc[start:start + plan.block_sizes[k]] = block.sum(axis=axis).ravel()
        return cls(counts=counts, m=float(m), parent_layout=plan, parent_counts=pc, t=counts.t)

    @classmethod
    def from_parent_counts(cls, parent: CountTable, m: float = 1.0) -> "AndeModel":
        """Degenerate case ``a = n - 1``: one superparent covering every attribute."""
        return cls(counts=None, m=float(m), parent_layout=parent.layout,
                   parent_counts=parent.counts, t=parent.t)

    def log_posterior(self, X) -> np.ndarray:
        Xb, single = _as_batch(X)
        plan = self.parent_layout
        a, C, m = plan.catalog.a, plan.class_count, self.m
        cards = np.asarray(plan.cardinalities, dtype=np.int64)
        if Xb.shape[1] != a:
            raise ValueError(f"expected instances with {a} attributes, got shape {Xb.shape}")
        N = Xb.shape[0]
        in_range = Xb < cards[None, :]
        Xs = np.where(in_range, Xb, 0)
        pranks = tuple_ranks(Xs, plan.catalog, cards)

        joint_layout = self.counts.layout if self.counts is not None else None
        jranks = tuple_ranks(Xs, joint_layout.catalog, cards) if joint_layout is not None else None

        submodels = []
        for k, s in enumerate(plan.catalog.subsets):
            ok = in_range[:, list(s)].all(axis=1)
            s_space = plan.block_sizes[k]
            parent = np.stack(
                [self.parent_counts[plan.offset(c, k) + pranks[:, k]] for c in range(C)], axis=1
            ).astype(float)
            score = np.log((parent + m / (C * s_space)) / (self.t + m))
            for i in range(a):
                if i in s:
                    continue
                joint = tuple(sorted(s + (i,)))
                j = joint_layout.catalog.rank[joint]
                cnt = np.stack(
                    [self.counts.counts[joint_layout.offset(c, j) + jranks[:, j]] for c in range(C)],
                    axis=1,
                ).astype(float)
                child = np.log((cnt + m / cards[i]) / (parent + m))
                score = score + np.where(in_range[:, i][:, None], child, 0.0)
            submodels.append(np.where(ok[:, None], score, -np.inf))
        stacked = np.stack(submodels, axis=0)  # (S, N, C)
        usable = np.isfinite(stacked[:, :, 0])
        count = usable.sum(axis=0)
        joint_score = logsumexp(stacked, axis=0) - np.log(np.maximum(count, 1))[:, None]
        if (count == 0).any():
            prior = np.log((self.parent_counts[:C] + m / C) / (self.t + m))
            joint_score[count == 0] = prior
        out = normalize(joint_score)
        return out[0] if single else out


def ande_log_posterior(model: AndeModel, x) -> np.ndarray:
    return model.log_posterior(x)

