import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_data
from dbl.combinatorics import anje_exponent, build_layout, enumerate_subsets, value_tuple_index
from dbl.models import (
    AndeModel,
    AnjeModel,
    DblModel,
    LrModel,
    ande_log_posterior,
    anje_log_posterior,
    dbl_log_posterior,
    lr_log_posterior,
    predict,
    to_lr,
)
from dbl.statistics import ProbabilityTables, accumulate, map_estimates
from dbl.training import init_dbl


# ---------------------------------------------------------------- helpers

def random_tables(rng, a, n, cards, C):
    """Random normalised tables plus the same numbers as a plain dict oracle.

    dict keys: ("prior", y) and (y, subset, value-tuple).
    """
    lay = build_layout(enumerate_subsets(a, n), cards, C)
    vec = np.empty(lay.total_len)
    ref = {}
    prior = rng.dirichlet(np.ones(C))
    vec[:C] = np.log(prior)
    for y in range(C):
        ref[("prior", y)] = math.log(prior[y])
        for j, s in enumerate(lay.catalog.subsets):
            probs = rng.dirichlet(np.ones(lay.block_sizes[j]))
            for vals in itertools.product(*(range(cards[i]) for i in s)):
                full = [0] * a
                for i, v in zip(s, vals):
                    full[i] = v
                r = value_tuple_index(s, full, cards)
                ref[(y, s, vals)] = math.log(probs[r])
                vec[lay.offset(y, j) + r] = math.log(probs[r])
    return ProbabilityTables(layout=lay, log_probs=vec, m=1.0), ref


def normalise(scores):
    mx = max(scores)
    z = sum(math.exp(s - mx) for s in scores)
    return [s - mx - math.log(z) for s in scores]


def explicit_partitions(a, n):
    """All ways to split range(a) into disjoint blocks of size n (a divisible by n)."""
    def rec(rest):
        if not rest:
            yield []
            return
        head = rest[0]
        for others in itertools.combinations(rest[1:], n - 1):
            block = (head,) + others
            remaining = [i for i in rest if i not in block]
            for tail in rec(remaining):
                yield [block] + tail
    return list(rec(list(range(a))))


# ---------------------------------------------------------------- AnJE

def test_partition_helper():
    parts = explicit_partitions(4, 2)
    assert sorted(parts) == [[(0, 1), (2, 3)], [(0, 2), (1, 3)], [(0, 3), (1, 2)]]


def test_anje_equals_geometric_mean_of_partitions(rng):
    cards, C = (2, 3, 2, 3), 3
    parts = explicit_partitions(4, 2)
    for _ in range(25):
        tables, ref = random_tables(rng, 4, 2, cards, C)
        model = AnjeModel(tables)
        x = [int(rng.integers(0, k)) for k in cards]
        # each partition is a full joint model P(y) Π_{α∈partition} P(x_α|y)
        part_logs = []
        for p in parts:
            part_logs.append([ref[("prior", y)] + sum(ref[(y, s, tuple(x[i] for i in s))] for s in p)
                              for y in range(C)])
        geo = [sum(pl[y] for pl in part_logs) / len(parts) for y in range(C)]
        expected = normalise(geo)
        got = anje_log_posterior(model, x)
        assert np.max(np.abs(got - expected)) < 1e-12


def test_anje_uniform_joint_gives_prior(rng):
    cards, C = (2, 2, 3), 2
    lay = build_layout(enumerate_subsets(3, 2), cards, C)
    vec = np.empty(lay.total_len)
    vec[:C] = np.log([0.3, 0.7])
    for c in range(C):
        for j, s in enumerate(lay.block_sizes):
            vec[lay.offset(c, j):lay.offset(c, j) + s] = -math.log(s)
    model = AnjeModel(ProbabilityTables(lay, vec, 1.0))
    for x in itertools.product(range(2), range(2), range(3)):
        assert np.allclose(np.exp(model.log_posterior(list(x))), [0.3, 0.7], atol=1e-14)


def test_anje_n1_is_naive_bayes(rng):
    d = random_data(rng, 4, 3, 3, 40)
    tables = map_estimates(accumulate(d, enumerate_subsets(4, 1)))
    model = AnjeModel(tables)
    assert model.exponent == 1.0
    lay = tables.layout
    for x in d.X[:10]:
        s = []
        for y in range(3):
            s.append(tables.log_prior[y] + sum(tables.log_theta(y, i)[x[i]] for i in range(4)))
        assert np.max(np.abs(model.log_posterior(x) - normalise(s))) < 1e-12
    assert lay.catalog.n == 1


# ---------------------------------------------------------------- DBL / LR

def test_dbl_at_init_is_anje(rng):
    tables, _ = random_tables(rng, 5, 2, (2, 3, 2, 2, 3), 3)
    w = init_dbl(tables.layout)
    X = np.stack([rng.integers(0, k, 30) for k in (2, 3, 2, 2, 3)], axis=1)
    assert np.max(np.abs(dbl_log_posterior(tables, w, X) - AnjeModel(tables).log_posterior(X))) < 1e-12


def test_zero_weights_uniform(rng):
    tables, _ = random_tables(rng, 3, 2, (2, 2, 2), 4)
    lp = dbl_log_posterior(tables, np.zeros(tables.layout.total_len), [1, 0, 1])
    assert np.allclose(lp, -math.log(4), atol=1e-15)
    lp = lr_log_posterior(tables.layout, np.zeros(tables.layout.total_len), [1, 0, 1])
    assert np.allclose(lp, -math.log(4), atol=1e-15)


def test_dbl_matches_scalar_re_evaluation(rng):
    a, n, cards, C = 3, 2, (2, 2, 2), 2
    for _ in range(20):
        tables, ref = random_tables(rng, a, n, cards, C)
        lay = tables.layout
        w = rng.normal(size=lay.total_len)
        x = [int(v) for v in rng.integers(0, 2, 3)]
        scores = []
        for y in range(C):
            s = w[y] * ref[("prior", y)]
            for j, sub in enumerate(lay.catalog.subsets):
                r = value_tuple_index(sub, x, cards)
                s += w[lay.offset(y, j) + r] * ref[(y, sub, tuple(x[i] for i in sub))]
            scores.append(s)
        assert np.max(np.abs(dbl_log_posterior(tables, w, x) - normalise(scores))) < 1e-12


def test_to_lr_examples():
    lay = build_layout(enumerate_subsets(1, 1), (2,), 2)
    tables = ProbabilityTables(lay, np.log([0.5, 0.5, 0.25, 0.75, 0.5, 0.5]), 1.0)
    assert np.array_equal(to_lr(tables, np.zeros(6)), np.zeros(6))
    beta = to_lr(tables, np.ones(6))
    assert abs(beta[0] - (-0.693147)) < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_reparameterisation_identity(seed):
    rng = np.random.default_rng(seed)
    a = int(rng.integers(2, 5))
    n = int(rng.integers(1, a + 1))
    cards = tuple(int(k) for k in rng.integers(1, 4, a))
    tables, _ = random_tables(rng, a, n, cards, int(rng.integers(2, 4)))
    w = rng.normal(scale=2.0, size=tables.layout.total_len)
    X = np.stack([rng.integers(0, k, 5) for k in cards], axis=1)
    diff = lr_log_posterior(tables.layout, to_lr(tables, w), X) - dbl_log_posterior(tables, w, X)
    assert np.max(np.abs(diff)) < 1e-12


def test_lr_class_shift_invariance(rng):
    tables, _ = random_tables(rng, 3, 2, (2, 3, 2), 3)
    lay = tables.layout
    beta = rng.normal(size=lay.total_len)
    shifted = beta.copy()
    shifted[:3] += 5.0
    x = [1, 2, 0]
    assert np.allclose(lr_log_posterior(lay, beta, x), lr_log_posterior(lay, shifted, x), atol=1e-12)


def test_posteriors_normalised(rng):
    tables, _ = random_tables(rng, 4, 2, (3, 2, 2, 3), 3)
    X = np.stack([rng.integers(0, k, 50) for k in (3, 2, 2, 3)], axis=1)
    w = rng.normal(size=tables.layout.total_len)
    for lp in (AnjeModel(tables).log_posterior(X), dbl_log_posterior(tables, w, X),
               lr_log_posterior(tables.layout, w, X)):
        assert np.allclose(np.exp(lp).sum(axis=1), 1.0, atol=1e-10)


def test_large_scores_do_not_overflow():
    lay = build_layout(enumerate_subsets(2, 1), (2, 2), 2)
    beta = np.zeros(lay.total_len)
    beta[0], beta[1] = 700.0, -700.0
    beta[2:] = 350.0
    lp = lr_log_posterior(lay, beta, [0, 1])
    assert np.isfinite(lp).all() and abs(np.logaddexp(*lp)) < 1e-10
    assert predict(lp) == 0


@pytest.mark.parametrize("probs,expected", [((0.2, 0.8), 1), ((0.5, 0.5), 0), ((0.25,) * 4, 0)])
def test_predict(probs, expected):
    assert predict(np.log(probs)) == expected


def test_dimension_mismatch(rng):
    tables, _ = random_tables(rng, 3, 2, (2, 2, 2), 2)
    with pytest.raises(ValueError):
        AnjeModel(tables).log_posterior([0, 1])
    with pytest.raises(ValueError):
        dbl_log_posterior(tables, np.ones(3), [0, 1, 0])


def test_reserved_index_drops_terms(rng):
    d = random_data(rng, 3, 2, 2, 30)
    tables = map_estimates(accumulate(d, enumerate_subsets(3, 1)))
    model = AnjeModel(tables)
    full = model.log_posterior([0, 1, 5])  # attribute 2 unseen value
    sub = [tables.log_prior[y] + tables.log_theta(y, 0)[0] + tables.log_theta(y, 1)[1] for y in range(2)]
    assert np.max(np.abs(full - normalise(sub))) < 1e-12


# ---------------------------------------------------------------- AnDE

def _count(rows, cond):
    return sum(1 for r in rows if cond(r))


def hand_a1de(rows, x, C, cards, m=1.0):
    """A1DE on a=2 written out term by term. rows are (x0, x1, y)."""
    t = len(rows)
    out = []
    for y in range(C):
        # superparent 0
        n0 = _count(rows, lambda r: r[0] == x[0] and r[2] == y)
        n01 = _count(rows, lambda r: r[0] == x[0] and r[1] == x[1] and r[2] == y)
        sp0 = (n0 + m / (C * cards[0])) / (t + m) * (n01 + m / cards[1]) / (n0 + m)
        n1 = _count(rows, lambda r: r[1] == x[1] and r[2] == y)
        sp1 = (n1 + m / (C * cards[1])) / (t + m) * (n01 + m / cards[0]) / (n1 + m)
        out.append(0.5 * (sp0 + sp1))
    z = sum(out)
    return [math.log(v / z) for v in out]


def test_a1de_two_attributes_hand_expansion(rng):
    d = random_data(rng, 2, (3, 2), 2, 25)
    rows = [(int(a), int(b), int(c)) for (a, b), c in zip(d.X, d.y)]
    model = AndeModel.from_counts(accumulate(d, enumerate_subsets(2, 2)))
    for x in itertools.product(range(3), range(2)):
        assert np.max(np.abs(ande_log_posterior(model, list(x)) - hand_a1de(rows, x, 2, (3, 2)))) < 1e-12


def brute_ande(rows, x, C, cards, parents, m=1.0):
    a, t = len(cards), len(rows)
    vals = []
    for y in range(C):
        subs = []
        for s in itertools.combinations(range(a), parents):
            ss = math.prod(cards[i] for i in s)
            ns = _count(rows, lambda r: r[-1] == y and all(r[i] == x[i] for i in s))
            p = (ns + m / (C * ss)) / (t + m)
            for i in range(a):
                if i in s:
                    continue
                nj = _count(rows, lambda r: r[-1] == y and r[i] == x[i] and all(r[k] == x[k] for k in s))
                p *= (nj + m / cards[i]) / (ns + m)
            subs.append(p)
        vals.append(sum(subs) / len(subs))
    z = sum(vals)
    return [math.log(v / z) for v in vals]


@pytest.mark.parametrize("a,n", [(3, 2), (4, 2), (4, 3)])
def test_ande_matches_brute_force(rng, a, n):
    cards = (2, 3, 2, 2)[:a]
    d = random_data(rng, a, cards, 3, 40)
    rows = [tuple(int(v) for v in xx) + (int(c),) for xx, c in zip(d.X, d.y)]
    model = AndeModel.from_counts(accumulate(d, enumerate_subsets(a, n)))
    for x in d.X[:8]:
        assert np.max(np.abs(model.log_posterior(x) - brute_ande(rows, list(x), 3, cards, n - 1))) < 1e-12


def test_ande_degenerate_lookup(rng):
    d = random_data(rng, 2, (2, 2), 2, 20)
    parent = accumulate(d, enumerate_subsets(2, 2))
    model = AndeModel.from_parent_counts(parent)
    t = len(d)
    for x in itertools.product(range(2), range(2)):
        r = value_tuple_index((0, 1), x, (2, 2))
        joint = [(parent.block(y, 0)[r] + 1 / 8) / (t + 1) for y in range(2)]
        z = sum(joint)
        assert np.allclose(model.log_posterior(list(x)), [math.log(j / z) for j in joint], atol=1e-12)


def test_ande_uniform_tables_uniform_posterior():
    X = np.array(list(itertools.product(range(2), range(3), range(2))) * 2)
    y = np.repeat([0, 1], len(X) // 2)
    from dbl.dataset import DiscretizedDataset
    d = DiscretizedDataset(X=X, y=y, cardinalities=(2, 3, 2), class_count=2,
                           attribute_names=("a", "b", "c"), class_labels=("0", "1"))
    model = AndeModel.from_counts(accumulate(d, enumerate_subsets(3, 2)))
    assert np.allclose(model.log_posterior(X), math.log(0.5), atol=1e-12)


def test_ande_rejects_n1(rng):
    d = random_data(rng, 3, 2, 2, 10)
    with pytest.raises(ValueError):
        AndeModel.from_counts(accumulate(d, enumerate_subsets(3, 1)))


def test_model_wrappers(rng):
    tables, _ = random_tables(rng, 3, 2, (2, 2, 2), 2)
    w = rng.normal(size=tables.layout.total_len)
    X = np.array([[0, 1, 1], [1, 0, 0]])
    assert np.allclose(DblModel(tables, w).log_posterior(X), dbl_log_posterior(tables, w, X), atol=1e-13)
    beta = to_lr(tables, w)
    assert np.array_equal(LrModel(tables.layout, beta).log_posterior(X), lr_log_posterior(tables.layout, beta, X))
    assert anje_exponent(3, 2) == AnjeModel(tables).exponent
