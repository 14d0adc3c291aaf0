import io
import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from picrules.data import DataError, RawTable, fit_discretizer, load_dataset
from picrules.evaluation import (
    CvConfig,
    ExternalRule,
    compare_rule_sets,
    evaluate_split,
    fold_assignment,
    holdout_assignment,
    load_rule_file,
    matching_methods,
    rule_frequency_histogram,
    run_cv,
)
from picrules.search import SearchParams

from conftest import TABLE1


def _table1():
    return load_dataset(io.StringIO(TABLE1), "Class")


def test_table1_leave_one_out():
    # worked by running the exhaustive oracle on each held-out row:
    # only the third row (a2,b3,c2,d1 -> 1) is predicted correctly
    schema, raw = _table1()
    cfg = CvConfig(folds=7, repeats=1, stratified=False, search=SearchParams(0.5))
    rep = run_cv(raw, schema, cfg)
    assert rep.accuracy_mean == pytest.approx(1 / 7, abs=1e-12)
    assert rep.n_predictions == 7
    assert rep.fallback_rate == 0.0
    assert sum(rep.rules.values()) == 7


def test_leave_one_out_is_seed_free():
    schema, raw = _table1()
    a = run_cv(raw, schema, CvConfig(7, 1, seed=0, stratified=False, search=SearchParams(0.5)))
    b = run_cv(raw, schema, CvConfig(7, 1, seed=99, stratified=False, search=SearchParams(0.5)))
    assert a.accuracy_mean == b.accuracy_mean
    assert a.rules == b.rules


def test_config_validation():
    with pytest.raises(ValueError):
        CvConfig(folds=1)
    with pytest.raises(ValueError):
        CvConfig(repeats=0)
    with pytest.raises(ValueError):
        CvConfig(holdout=0)


def test_stratification_needs_enough_rows():
    schema, raw = _table1()
    with pytest.raises(DataError, match="fewer than"):
        run_cv(raw, schema, CvConfig(folds=4, repeats=1))


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.sampled_from("abc"), min_size=10, max_size=80),
    st.integers(2, 5),
    st.integers(0, 2**32 - 1),
)
def test_folds_partition_and_stratify(labels, folds, seed):
    counts = Counter(labels)
    if min(counts.values()) < folds:
        return
    assign = fold_assignment(labels, folds, np.random.default_rng(seed))
    assert sorted(set(assign.tolist())) == list(range(folds))
    sizes = np.bincount(assign, minlength=folds)
    assert sizes.max() - sizes.min() <= 1
    labels = np.asarray(labels)
    for c, n in counts.items():
        per_fold = np.bincount(assign[labels == c], minlength=folds)
        assert per_fold.max() - per_fold.min() <= 1
        assert np.all(np.abs(per_fold - n / folds) <= 1)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from("ab"), min_size=4, max_size=60), st.integers(0, 1000))
def test_holdout_sizes(labels, seed):
    n_test = max(1, len(labels) // 3)
    assign = holdout_assignment(labels, n_test, np.random.default_rng(seed))
    assert int(np.sum(assign == 0)) == n_test
    labels = np.asarray(labels)
    for c in set(labels.tolist()):
        share = np.sum((assign == 0) & (labels == c))
        assert abs(share - np.sum(labels == c) * n_test / len(labels)) < 1


def _numeric_text(n=60, seed=3):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    y = np.where(x[:, 0] + 0.3 * rng.normal(size=n) > 0, "pos", "neg")
    lines = ["u,v,w,class"] + [f"{a:.4f},{b:.4f},{c:.4f},{t}" for (a, b, c), t in zip(x, y)]
    return "\n".join(lines) + "\n"


def test_reproducible_reports():
    schema, raw = load_dataset(io.StringIO(_numeric_text()), "class")
    cfg = CvConfig(folds=3, repeats=2, seed=5, search=SearchParams(0.8))
    a = run_cv(raw, schema, cfg)
    b = run_cv(raw, schema, cfg)
    assert a.to_json() == b.to_json()
    c = run_cv(raw, schema, cfg, workers=2)
    assert a.to_json() == c.to_json()


def test_report_invariants():
    schema, raw = load_dataset(io.StringIO(_numeric_text()), "class")
    rep = run_cv(raw, schema, CvConfig(folds=3, repeats=2, search=SearchParams(0.8)))
    assert 0.0 <= rep.accuracy_mean <= 1.0
    assert len(rep.accuracy_per_run) == 2 and len(rep.accuracy_per_fold) == 6
    assert rep.n_predictions == 2 * len(raw)
    assert sum(rep.rules.values()) == round(rep.n_predictions * (1 - rep.fallback_rate))
    assert rep.avg_rule_length >= 1.0
    assert "wall_time" not in rep.to_json()
    assert "wall_time" in rep.to_json(include_timing=True)


def test_held_out_rows_do_not_leak():
    schema, raw = load_dataset(io.StringIO(_numeric_text()), "class")
    train_idx, test_idx = list(range(40)), list(range(40, 60))
    before = fit_discretizer(raw.take(train_idx), schema)
    wild = tuple(("1e6", "-1e6", "5e5") for _ in range(15))
    # rows 45.. are mutated; rows 40..44 are the ones predicted
    mutated = RawTable(raw.values[:45] + wild, raw.labels)
    assert fit_discretizer(mutated.take(train_idx), schema) == before
    p1 = evaluate_split(raw, schema, train_idx, test_idx[:5], SearchParams(0.8))
    p2 = evaluate_split(mutated, schema, train_idx, test_idx[:5], SearchParams(0.8))
    assert p1 == p2


def test_categorical_vocab_is_per_fold():
    # a value only present in held-out rows is unseen at prediction time
    text = "f,g,y\n" + "a,x,p\nb,x,q\n" * 5 + "zz,x,p\n"
    schema, raw = load_dataset(io.StringIO(text), "y")
    preds, rules = evaluate_split(raw, schema, list(range(10)), [10], SearchParams(0.9))
    assert rules[0] is None or all(f != "f" for f, _ in rules[0][0])


def test_histogram_single_perfect_feature():
    text = "f,g,y\n" + "".join(f"a,{i % 3},p\n" for i in range(10)) + "".join(f"b,{i % 3},q\n" for i in range(10))
    schema, raw = load_dataset(io.StringIO(text), "y", kinds={"g": "categorical"})
    rep = run_cv(raw, schema, CvConfig(folds=2, repeats=1, search=SearchParams(0.9)))
    hist = rule_frequency_histogram(rep)
    assert hist == [("{f=a} -> p", 10), ("{f=b} -> q", 10)]
    assert rep.accuracy_mean == 1.0


def test_histogram_empty_when_all_fallback():
    # every held-out value is unseen in its training fold
    text = "f,y\n" + "".join(f"v{i},{'p' if i % 2 else 'q'}\n" for i in range(8))
    schema, raw = load_dataset(io.StringIO(text), "y")
    rep = run_cv(raw, schema, CvConfig(folds=2, repeats=1))
    assert rule_frequency_histogram(rep) == []
    assert rep.fallback_rate == 1.0
    assert rep.avg_rule_length == 0.0


def _r(preds, label):
    return (tuple(sorted(preds)), label)


def test_compare_rule_sets():
    odor = _r([("odor", "p")], "1")
    common, personal = compare_rule_sets([odor], [ExternalRule(odor, "BRS")])
    assert common == [odor] and personal == []
    a0 = _r([("a", "1")], "0")
    common, personal = compare_rule_sets([a0], [_r([("a", "1")], "1")])
    assert common == [] and personal == [a0]
    common, personal = compare_rule_sets([a0], [_r([("a", "1"), ("b", "2")], "0")])
    assert common == [a0]
    # the inclusion runs one way only
    wide = _r([("a", "1"), ("b", "2")], "0")
    common, personal = compare_rule_sets([wide], [a0])
    assert personal == [wide]


def test_matching_methods():
    ours = _r([("a", "1")], "0")
    theirs = [ExternalRule(_r([("a", "1")], "0"), "CART"), ExternalRule(_r([("a", "1"), ("b", "0")], "0"), "BRS"),
              ExternalRule(_r([("a", "1")], "1"), "RF")]
    assert matching_methods(ours, theirs) == ["BRS", "CART"]


def test_load_rule_file(tmp_path):
    p = tmp_path / "rules.json"
    p.write_text(json.dumps([{"predicates": [{"feature": "b", "value": 2}, {"feature": "a", "value": "x"}],
                              "label": 1, "method": "DRS"}]))
    (rule,) = load_rule_file(p)
    assert rule.rule == ((("a", "x"), ("b", "2")), "1")
    assert rule.method == "DRS"
    report = tmp_path / "report.json"
    report.write_text(json.dumps({"rules": [{"predicates": [{"feature": "a", "value": "x"}], "label": "1"}]}))
    assert len(load_rule_file(report)) == 1


@pytest.mark.parametrize("body, message", [
    ("{not json", "invalid JSON"),
    ('{"x": 1}', "expected a JSON array"),
    ('[{"label": 1}]', "malformed"),
    ('[{"predicates": [], "label": 1}]', "no predicates"),
    ('[{"predicates": [{"feature": "a", "value": 1}, {"feature": "a", "value": 2}], "label": 1}]', "repeats"),
])
def test_rule_file_errors(tmp_path, body, message):
    p = tmp_path / "bad.json"
    p.write_text(body)
    with pytest.raises(DataError, match=message):
        load_rule_file(p)


def test_rule_file_missing(tmp_path):
    with pytest.raises(DataError, match="cannot read"):
        load_rule_file(tmp_path / "nope.json")
