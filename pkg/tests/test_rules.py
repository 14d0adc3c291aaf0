from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from picrules.data import UNSEEN
from picrules.rules import (
    Predicate,
    Rule,
    ScoreParams,
    ZeroCoverageError,
    best_label_for,
    con_bound,
    count_coverage,
    itemset_bits,
    make_itemset,
    match,
    render_rule,
    score,
    ub,
    ub_min_con,
)

from conftest import random_instance, scan_counts

P5 = ScoreParams(0.5)


def _single(table1, x, j):
    it = (Predicate(j, x[j]),)
    counts = count_coverage(it, table1.index)
    return best_label_for(it, counts, table1.ds.class_counts, P5)


def test_level_one_scores(table1, table1_query):
    expected = [F(7, 12), F(5, 12), F(3, 4), F(7, 12)]
    cons = [F(5, 6), F(2, 3), F(7, 8), F(5, 6)]
    for j in range(4):
        _, cand = _single(table1, table1_query, j)
        assert cand.a_score == pytest.approx(float(expected[j]), abs=1e-12)
        assert cand.con == pytest.approx(float(cons[j]), abs=1e-12)


def test_f3_c2_statistics(table1, table1_query):
    label, cand = _single(table1, table1_query, 2)
    assert table1.schema.classes[label] == "2"
    assert (cand.coverage, cand.positive) == (4, 3)
    assert cand.precision == pytest.approx(0.75)
    assert cand.recall == pytest.approx(0.75)


def test_ub_vs_min_con(table1, table1_query):
    x = table1_query
    cache = {}
    for j in (0, 2):
        _, cand = _single(table1, x, j)
        cache[cand.itemset] = cand
    pair = make_itemset([(0, x[0]), (2, x[2])])
    assert ub(pair, cache, P5) == pytest.approx(0.75, abs=1e-12)
    assert ub_min_con(pair, cache) == pytest.approx(F(5, 6), abs=1e-12)


def test_ub_requires_cached_subsets(table1, table1_query):
    pair = make_itemset([(0, table1_query[0]), (2, table1_query[2])])
    with pytest.raises(KeyError):
        ub(pair, {}, P5)


def test_zero_coverage_rejected(table1):
    with pytest.raises(ZeroCoverageError):
        score(Rule((), 0), (0, (0, 0)), table1.ds.class_counts, P5)
    with pytest.raises(ZeroCoverageError):
        best_label_for((), (0, (0, 0)), table1.ds.class_counts, P5)


@pytest.mark.parametrize("alpha", [-0.1, 1.01, float("nan")])
def test_alpha_validated(alpha):
    with pytest.raises(ValueError):
        ScoreParams(alpha)


def test_alpha_endpoints(table1, table1_query):
    for alpha, attr in ((1.0, "precision"), (0.0, "recall")):
        p = ScoreParams(alpha)
        for j in range(4):
            it = (Predicate(j, table1_query[j]),)
            counts = count_coverage(it, table1.index)
            _, cand = best_label_for(it, counts, table1.ds.class_counts, p)
            assert cand.a_score == pytest.approx(getattr(cand, attr))
        # con collapses to 1 at alpha=1 and to max support at alpha=0
    assert con_bound((0.2, 0.4), ScoreParams(1.0)) == 1.0
    assert con_bound((0.2, 0.4), ScoreParams(0.0)) == pytest.approx(0.4)


def test_tie_break_prefers_more_positives_then_lower_id():
    # class sizes 2 and 4; itemset covers 1 of class 0 and 2 of class 1
    # alpha=0: recall 1/2 vs 2/4, tie on A, class 1 has more positives
    label, _ = best_label_for((), (3, (1, 2)), (2, 4), ScoreParams(0.0))
    assert label == 1
    # exact tie on A and positives: lower id wins
    label, _ = best_label_for((), (2, (1, 1)), (3, 3), ScoreParams(0.5))
    assert label == 0


def test_empty_class_never_chosen():
    label, _ = best_label_for((), (2, (0, 2, 0)), (0, 5, 3), ScoreParams(0.5))
    assert label == 1


def test_match_and_render(table1, table1_query):
    it = make_itemset([(2, table1_query[2]), (0, table1_query[0])])
    assert [p.feature for p in it] == [0, 2]
    assert match(it, table1_query)
    assert render_rule(Rule(it, 1), table1.schema, table1.ds.vocabulary) == "{f1=a1} {f3=c2} -> 2"
    assert not match(((Predicate(0, UNSEEN)),), (0, 0, 0, 0))


@pytest.mark.parametrize("seed", range(40))
def test_support_anti_monotone_and_bounds(seed):
    fitted, x, alpha = random_instance(seed)
    p = ScoreParams(alpha)
    m = len(x)
    cache = {}
    for j in range(m):
        it = (Predicate(j, x[j]),)
        counts = count_coverage(it, fitted.index)
        if counts[0]:
            cache[it] = best_label_for(it, counts, fitted.ds.class_counts, p)[1]
    for a in range(m):
        for b in range(a + 1, m):
            pair = make_itemset([(a, x[a]), (b, x[b])])
            counts = count_coverage(pair, fitted.index)
            assert counts == scan_counts(fitted.ds, pair)
            if not counts[0]:
                continue
            _, cand = best_label_for(pair, counts, fitted.ds.class_counts, p)
            for sub in (pair[:1], pair[1:]):
                parent = cache[sub]
                assert all(c <= q + 1e-12 for c, q in zip(cand.per_class_support, parent.per_class_support))
                assert cand.a_score <= parent.con + 1e-12
                assert cand.con <= parent.con + 1e-12
            assert cand.a_score <= ub(pair, cache, p) + 1e-12
            assert ub(pair, cache, p) <= ub_min_con(pair, cache) + 1e-12


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1, 40).flatmap(lambda n: st.tuples(
        st.just(n),
        st.integers(0, n),
        st.integers(1, 60),
    )),
    st.floats(0, 1),
)
def test_score_formula(dims, alpha):
    cov, pos, extra = dims
    n_y = pos + extra
    cand = score(Rule((), 0), (cov, (pos, cov - pos)), (n_y, 100), ScoreParams(alpha))
    assert cand.a_score == pytest.approx(alpha * pos / cov + (1 - alpha) * pos / n_y)
    assert 0.0 <= cand.a_score <= cand.con + 1e-12 <= 1.0 + 1e-12
