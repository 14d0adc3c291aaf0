"""Repeated k-fold evaluation, rule statistics and rule-set comparison."""
from __future__ import annotations

import csv
import json
import math
import os
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import (
    NUMERIC,
    DataError,
    RawTable,
    Schema,
    bin_label,
    build_index,
    encode,
    fit_discretizer,
)
from .rules import predicate_names, render
from .search import SearchParams, predict

# A rule identified by names only: ((feature, value), ...) sorted, plus label.
NamedRule = tuple[tuple[tuple[str, str], ...], str]


def rule_text(rule: NamedRule) -> str:
    return render(rule[0], rule[1])


def rule_to_json(rule: NamedRule, **extra) -> dict:
    out = {"predicates": [{"feature": f, "value": v} for f, v in rule[0]], "label": rule[1]}
    out.update(extra)
    return out


@dataclass(frozen=True)
class CvConfig:
    folds: int = 5
    repeats: int = 5
    seed: int = 0
    stratified: bool = True
    search: SearchParams = field(default_factory=SearchParams)
    holdout: int | None = None

    def __post_init__(self):
        if self.holdout is None and self.folds < 2:
            raise ValueError("folds must be at least 2")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.holdout is not None and self.holdout < 1:
            raise ValueError("holdout must be at least 1")


def fold_assignment(
    labels: Sequence[str],
    folds: int,
    rng: np.random.Generator,
    stratified: bool = True,
) -> np.ndarray:
    """Fold id per row. Stratified deals each shuffled class round-robin,
    carrying the fold pointer across classes so fold sizes stay balanced."""
    n = len(labels)
    out = np.empty(n, dtype=np.int64)
    if not stratified:
        perm = rng.permutation(n)
        out[perm] = np.arange(n) % folds
        return out
    labels = np.asarray(labels)
    offset = 0
    for c in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == c)
        if len(idx) < folds:
            raise DataError(f"class {c!r} has {len(idx)} rows, fewer than {folds} folds")
        idx = rng.permutation(idx)
        out[idx] = (offset + np.arange(len(idx))) % folds
        offset = (offset + len(idx)) % folds
    return out


def holdout_assignment(labels: Sequence[str], n_test: int, rng: np.random.Generator) -> np.ndarray:
    """0 marks held-out rows, 1 training rows; held-out rows are drawn per class
    in proportion to class size (largest remainders)."""
    labels = np.asarray(labels)
    n = len(labels)
    if not 0 < n_test < n:
        raise DataError(f"holdout size {n_test} must be between 1 and {n - 1}")
    classes = sorted(set(labels.tolist()))
    sizes = np.array([np.sum(labels == c) for c in classes])
    quota = sizes * n_test / n
    take = np.floor(quota).astype(int)
    for i in np.argsort(-(quota - take), kind="stable")[: n_test - take.sum()]:
        take[i] += 1
    out = np.ones(n, dtype=np.int64)
    for c, t in zip(classes, take):
        idx = rng.permutation(np.flatnonzero(labels == c))
        out[idx[:t]] = 0
    return out


@dataclass(frozen=True)
class FoldResult:
    repeat: int
    fold: int
    rows: tuple[int, ...]
    predicted: tuple[str, ...]
    actual: tuple[str, ...]
    rules: tuple[NamedRule | None, ...]


def evaluate_split(
    raw: RawTable,
    schema: Schema,
    train_idx: Sequence[int],
    test_idx: Sequence[int],
    params: SearchParams,
) -> tuple[list[str], list[NamedRule | None]]:
    """Fit encoders and index on the training rows only, then predict the rest."""
    train = raw.take(train_idx)
    test = raw.take(test_idx)
    disc = fit_discretizer(train, schema)
    ds = encode(train, schema, disc)
    index = build_index(ds)
    encoded = encode(RawTable(test.values, None), schema, disc, ds.vocabulary)
    preds, rules = [], []
    for x in encoded.rows:
        res = predict(tuple(int(v) for v in x), ds, index, params)
        preds.append(schema.classes[res.predicted_label])
        if res.rule is None:
            rules.append(None)
        else:
            names = tuple(predicate_names(res.rule.itemset, schema, ds.vocabulary))
            rules.append((names, schema.classes[res.rule.rule.label]))
    return preds, rules


def _run_fold(task) -> FoldResult:
    raw, schema, params, repeat, fold, train_idx, test_idx = task
    preds, rules = evaluate_split(raw, schema, train_idx, test_idx, params)
    actual = tuple(raw.labels[i] for i in test_idx)
    return FoldResult(repeat, fold, tuple(test_idx), tuple(preds), actual, tuple(rules))


def _tasks(raw: RawTable, schema: Schema, config: CvConfig):
    for r in range(config.repeats):
        rng = np.random.default_rng([config.seed, r])
        if config.holdout is not None:
            assign = holdout_assignment(raw.labels, config.holdout, rng)
            test_idx = np.flatnonzero(assign == 0).tolist()
            train_idx = np.flatnonzero(assign == 1).tolist()
            yield (raw, schema, config.search, r, 0, train_idx, test_idx)
            continue
        assign = fold_assignment(raw.labels, config.folds, rng, config.stratified)
        for f in range(config.folds):
            test_idx = np.flatnonzero(assign == f).tolist()
            train_idx = np.flatnonzero(assign != f).tolist()
            yield (raw, schema, config.search, r, f, train_idx, test_idx)


@dataclass
class EvalReport:
    accuracy_mean: float
    accuracy_std: float
    accuracy_per_run: list[float]
    accuracy_per_fold: list[float]
    rules: Counter
    avg_rule_length: float
    n_distinct_rules: int
    distinct_rules_per_run: list[int]
    fallback_rate: float
    n_predictions: int
    config: dict
    wall_time: float = 0.0

    @property
    def mean_distinct_rules_per_run(self) -> float:
        runs = self.distinct_rules_per_run
        return sum(runs) / len(runs) if runs else 0.0

    def to_json(self, include_timing: bool = False) -> dict:
        out = {
            "accuracy_mean": self.accuracy_mean,
            "accuracy_std": self.accuracy_std,
            "accuracy_per_run": self.accuracy_per_run,
            "accuracy_per_fold": self.accuracy_per_fold,
            "avg_rule_length": self.avg_rule_length,
            "n_distinct_rules_pooled": self.n_distinct_rules,
            "distinct_rules_per_run": self.distinct_rules_per_run,
            "mean_distinct_rules_per_run": self.mean_distinct_rules_per_run,
            "fallback_rate": self.fallback_rate,
            "n_predictions": self.n_predictions,
            "config": self.config,
            "rules": [rule_to_json(r, count=n) for r, n in sorted_rules(self.rules)],
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out


def sorted_rules(rules: Counter) -> list[tuple[NamedRule, int]]:
    return sorted(rules.items(), key=lambda kv: (-kv[1], rule_text(kv[0])))


def aggregate(results: Iterable[FoldResult], config: CvConfig) -> EvalReport:
    results = sorted(results, key=lambda fr: (fr.repeat, fr.fold))
    per_run_correct: dict[int, list[int]] = {}
    per_run_rules: dict[int, set] = {}
    fold_acc = []
    rules: Counter = Counter()
    lengths = []
    n_fallback = 0
    n_total = 0
    for fr in results:
        correct = [p == a for p, a in zip(fr.predicted, fr.actual)]
        fold_acc.append(sum(correct) / len(correct) if correct else 0.0)
        bucket = per_run_correct.setdefault(fr.repeat, [0, 0])
        bucket[0] += sum(correct)
        bucket[1] += len(correct)
        seen = per_run_rules.setdefault(fr.repeat, set())
        for rule in fr.rules:
            n_total += 1
            if rule is None:
                n_fallback += 1
                continue
            rules[rule] += 1
            seen.add(rule)
            lengths.append(len(rule[0]))
    run_acc = [c / t if t else 0.0 for c, t in (per_run_correct[r] for r in sorted(per_run_correct))]
    mean = sum(run_acc) / len(run_acc) if run_acc else 0.0
    std = float(np.std(fold_acc)) if fold_acc else 0.0
    return EvalReport(
        accuracy_mean=mean,
        accuracy_std=std,
        accuracy_per_run=run_acc,
        accuracy_per_fold=fold_acc,
        rules=rules,
        avg_rule_length=sum(lengths) / len(lengths) if lengths else 0.0,
        n_distinct_rules=len(rules),
        distinct_rules_per_run=[len(per_run_rules[r]) for r in sorted(per_run_rules)],
        fallback_rate=n_fallback / n_total if n_total else 0.0,
        n_predictions=n_total,
        config=config_dict(config),
    )


def config_dict(config: CvConfig) -> dict:
    return {
        "folds": config.folds,
        "repeats": config.repeats,
        "seed": config.seed,
        "stratified": config.stratified,
        "holdout": config.holdout,
        "alpha": config.search.alpha,
        "max_length": config.search.max_length,
        "engine": config.search.engine,
    }


def run_cv(raw: RawTable, schema: Schema, config: CvConfig, workers: int = 1) -> EvalReport:
    """Repeated (stratified) k-fold cross-validation, or repeated holdout when
    ``config.holdout`` is set. Each split refits discretizer, dictionaries and
    index on its training rows."""
    if raw.labels is None:
        raise DataError("cross-validation needs a labeled dataset")
    start = time.perf_counter()
    tasks = list(_tasks(raw, schema, config))
    if workers > 1 and len(tasks) > 1:
        workers = min(workers, os.cpu_count() or 1, len(tasks))
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]
    report = aggregate(results, config)
    report.wall_time = time.perf_counter() - start
    return report


def rule_frequency_histogram(report: EvalReport) -> list[tuple[str, int]]:
    return [(rule_text(r), n) for r, n in sorted_rules(report.rules)]


# -- rule-set comparison ------------------------------------------------------

@dataclass(frozen=True)
class ExternalRule:
    rule: NamedRule
    method: str | None = None


def _parse_rule(obj, where: str) -> ExternalRule:
    try:
        preds = tuple(sorted((str(p["feature"]), str(p["value"])) for p in obj["predicates"]))
        label = str(obj["label"])
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed rule entry: {obj!r}", where) from exc
    if not preds:
        raise DataError("rule with no predicates", where)
    feats = [f for f, _ in preds]
    if len(set(feats)) != len(feats):
        raise DataError(f"rule repeats a feature: {obj!r}", where)
    return ExternalRule((preds, label), obj.get("method"))


def load_rule_file(path: str | Path) -> list[ExternalRule]:
    """Read a JSON array of ``{predicates: [{feature, value}], label}`` entries,
    or a cross-validation report (its ``rules`` list is used)."""
    where = str(path)
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read file: {exc.strerror}", where) from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON: {exc.msg}", where, exc.lineno) from exc
    if isinstance(data, dict) and "rules" in data:
        data = data["rules"]
    if not isinstance(data, list):
        raise DataError("expected a JSON array of rules", where)
    return [_parse_rule(obj, where) for obj in data]


def schema_vocabulary(schema: Schema, raw: RawTable) -> dict[str, set[str]]:
    vocab = {}
    for j, spec in enumerate(schema.features):
        if spec.kind == NUMERIC:
            vocab[spec.name] = {bin_label(b) for b in range(spec.bins)} | {schema.missing_token}
        else:
            vocab[spec.name] = {row[j] for row in raw.values}
    return vocab


def check_vocabulary(rules: Iterable[ExternalRule], schema: Schema, vocab: dict[str, set[str]], where: str):
    for er in rules:
        preds, label = er.rule
        for f, v in preds:
            if f not in vocab:
                raise DataError(f"unknown feature {f!r}", where)
            if v not in vocab[f]:
                raise DataError(f"unknown value {v!r} for feature {f!r}", where)
        if label not in schema.classes:
            raise DataError(f"unknown label {label!r}", where)


def compare_rule_sets(
    ours: Iterable[NamedRule],
    theirs: Iterable[ExternalRule | NamedRule],
) -> tuple[list[NamedRule], list[NamedRule]]:
    """Split ``ours`` into rules subsumed by some external rule with the same
    label (itemset contained in theirs) and the remaining personalized ones."""
    external = [t.rule if isinstance(t, ExternalRule) else t for t in theirs]
    by_label: dict[str, list[frozenset]] = {}
    for preds, label in external:
        by_label.setdefault(label, []).append(frozenset(preds))
    common, personalized = [], []
    for rule in ours:
        s = frozenset(rule[0])
        if any(s <= other for other in by_label.get(rule[1], ())):
            common.append(rule)
        else:
            personalized.append(rule)
    return common, personalized


def matching_methods(rule: NamedRule, theirs: Sequence[ExternalRule]) -> list[str]:
    s = frozenset(rule[0])
    return sorted({t.method for t in theirs
                   if t.method and t.rule[1] == rule[1] and s <= frozenset(t.rule[0])})


# -- writers -----------------------------------------------------------------

def write_json(obj, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")


def write_accuracy_csv(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "accuracy"])
        for i, acc in enumerate(report.accuracy_per_run):
            w.writerow([i, repr(acc)])


def write_histogram_csv(hist: Sequence[tuple[str, int]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rule_text", "count"])
        w.writerows(hist)


def histogram_json(hist: Sequence[tuple[str, int]]) -> list[dict]:
    return [{"rule_text": t, "count": n} for t, n in hist]


def mean_std(xs: Sequence[float]) -> tuple[float, float]:
    if not xs:
        return math.nan, math.nan
    return float(np.mean(xs)), float(np.std(xs))
