"""Per-sample rule search: pruned level-wise search, naive greedy, exhaustive oracle."""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .data import Dataset, PredicateIndex
from .rules import (
    Itemset,
    Predicate,
    Rule,
    ScoreParams,
    ScoredCandidate,
    best_label_for,
    counts_from_bits,
    match,
    rule_record,
    ub,
)

ENGINES = ("pic", "naive", "oracle")
MAJORITY_CLASS = "majority_class"
ORACLE_MAX_FEATURES = 20
NO_SCORE = -math.inf


@dataclass(frozen=True)
class SearchParams:
    alpha: float = 0.9
    max_length: int = 100
    engine: str = "pic"

    def __post_init__(self):
        ScoreParams(self.alpha)
        if self.max_length < 1:
            raise ValueError("max_length must be at least 1")
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")

    @property
    def score_params(self) -> ScoreParams:
        return ScoreParams(self.alpha)


@dataclass
class Counters:
    generated: int = 0
    scored: int = 0
    pruned_by_ub: int = 0
    pruned_by_con: int = 0
    pruned_by_subrule: int = 0


@dataclass
class LevelState:
    k: int
    candidates: list[ScoredCandidate]
    best_of_level: ScoredCandidate | None
    best_global: ScoredCandidate | None


@dataclass(frozen=True)
class SearchResult:
    rule: ScoredCandidate | None
    predicted_label: int
    stopped_at_level: int
    fallback: str | None = None
    counters: Counters = field(default_factory=Counters)
    level_scores: tuple[float, ...] = ()

    @property
    def a_score(self) -> float | None:
        return None if self.rule is None else self.rule.a_score


def _score_of(c: ScoredCandidate | None) -> float:
    return NO_SCORE if c is None else c.a_score


def seed_level_one(
    x: Sequence[int],
    dataset: Dataset,
    index: PredicateIndex,
    params: ScoreParams,
) -> LevelState:
    cands = []
    best = None
    for j, v in enumerate(x):
        bits = index.bits(j, int(v))
        if not bits:
            continue
        counts = counts_from_bits(bits, index)
        _, cand = best_label_for((Predicate(j, int(v)),), counts, dataset.class_counts, params, bits)
        cands.append(cand)
        if best is None or cand.a_score > best.a_score:
            best = cand
    return LevelState(1, cands, best, best)


def _joins(level: list[ScoredCandidate], counters: Counters | None = None):
    """Prefix-join of a canonical level, keeping only joins whose every
    sub-itemset survives. Yields (itemset, left parent, right parent)."""
    ordered = sorted(level, key=lambda c: c.itemset)
    present = {c.itemset for c in ordered}
    for _, group in itertools.groupby(ordered, key=lambda c: c.itemset[:-1]):
        group = list(group)
        for a, b in itertools.combinations(group, 2):
            if a.itemset[-1].feature == b.itemset[-1].feature:
                continue
            s = a.itemset + (b.itemset[-1],)
            # the two sub-itemsets dropping the last two predicates are a and b
            if all(s[:i] + s[i + 1:] in present for i in range(len(s) - 2)):
                yield s, a, b
            elif counters is not None:
                counters.pruned_by_subrule += 1


def generate_candidates(level: list[ScoredCandidate], k: int | None = None) -> list[Itemset]:
    """Length-(k+1) itemsets all of whose length-k sub-itemsets are in ``level``."""
    return [s for s, _, _ in _joins(level)]


def run_pic(
    x: Sequence[int],
    dataset: Dataset,
    index: PredicateIndex,
    params: SearchParams,
    trace: list | None = None,
) -> SearchResult:
    """Level-wise search with bound pruning.

    ``trace`` (if given) receives ``(kind, itemset, bound, incumbent)`` for
    every candidate dropped by the ub or con test.
    """
    sp = params.score_params
    counters = Counters()
    state = seed_level_one(x, dataset, index, sp)
    counters.generated += len(x)
    counters.scored += len(state.candidates)
    best = state.best_global
    if best is None:
        return _fallback(dataset, 1, counters)
    level_scores = [best.a_score]
    prev_level_best = best
    survivors = _con_filter(state.candidates, best, counters, trace)
    k = 1
    while k < params.max_length:
        k += 1
        joins = list(_joins(survivors, counters))
        counters.generated += len(joins)
        if not joins:
            k -= 1
            break
        cache = {c.itemset: c for c in survivors}
        level_best = None
        next_survivors = []
        for s, a, b in joins:
            bound = ub(s, cache, sp)
            if bound <= best.a_score:
                counters.pruned_by_ub += 1
                if trace is not None:
                    trace.append(("ub", s, bound, best.a_score))
                continue
            bits = a.bits & b.bits
            if not bits:
                continue
            _, cand = best_label_for(s, counts_from_bits(bits, index), dataset.class_counts, sp, bits)
            counters.scored += 1
            if cand.a_score > best.a_score:
                best = cand
            if level_best is None or cand.a_score > level_best.a_score:
                level_best = cand
            if cand.con <= best.a_score:
                counters.pruned_by_con += 1
                if trace is not None:
                    trace.append(("con", s, cand.con, best.a_score))
            else:
                next_survivors.append(cand)
        if level_best is None:
            break
        level_scores.append(level_best.a_score)
        if level_best.a_score <= prev_level_best.a_score:
            break
        prev_level_best = level_best
        survivors = next_survivors
    return SearchResult(best, best.rule.label, k, None, counters, tuple(level_scores))


def _con_filter(cands, best, counters, trace):
    kept = []
    for c in cands:
        if c.con <= best.a_score:
            counters.pruned_by_con += 1
            if trace is not None:
                trace.append(("con", c.itemset, c.con, best.a_score))
        else:
            kept.append(c)
    return kept


def _fallback(dataset: Dataset, k: int, counters: Counters) -> SearchResult:
    return SearchResult(None, dataset.majority_class(), k, MAJORITY_CLASS, counters, ())


def run_naive(
    x: Sequence[int],
    dataset: Dataset,
    index: PredicateIndex,
    params: SearchParams,
) -> SearchResult:
    """Greedy level-wise search scoring every itemset of each length."""
    sp = params.score_params
    counters = Counters()
    m = len(x)
    preds = [Predicate(j, int(v)) for j, v in enumerate(x)]
    pred_bits = [index.bits(j, int(v)) for j, v in enumerate(x)]
    prev_bits = {(j,): pred_bits[j] for j in range(m)}
    best = None
    prev_level_best = None
    level_scores = []
    k = 0
    while k < min(params.max_length, m):
        k += 1
        level_best = None
        bits_k = {}
        for combo in itertools.combinations(range(m), k):
            counters.generated += 1
            bits = prev_bits[combo] if k == 1 else prev_bits[combo[:-1]] & pred_bits[combo[-1]]
            bits_k[combo] = bits
            if not bits:
                continue
            s = tuple(preds[j] for j in combo)
            _, cand = best_label_for(s, counts_from_bits(bits, index), dataset.class_counts, sp, bits)
            counters.scored += 1
            if best is None or cand.a_score > best.a_score:
                best = cand
            if level_best is None or cand.a_score > level_best.a_score:
                level_best = cand
        prev_bits = bits_k
        if level_best is None:
            break
        level_scores.append(level_best.a_score)
        if _score_of(level_best) <= _score_of(prev_level_best):
            break
        prev_level_best = level_best
    if best is None:
        return _fallback(dataset, max(k, 1), counters)
    return SearchResult(best, best.rule.label, k, None, counters, tuple(level_scores))


@dataclass(frozen=True)
class OracleEntry:
    itemset: Itemset
    label: int
    a_score: float
    coverage: int
    positive: int


@dataclass(frozen=True)
class OracleReport:
    level_bests: tuple[OracleEntry | None, ...]
    greedy: OracleEntry | None
    optimum: OracleEntry | None
    entries: tuple[OracleEntry, ...]
    stopped_at_level: int


class OracleTooLarge(ValueError):
    pass


def run_oracle(
    x: Sequence[int],
    dataset: Dataset,
    params: ScoreParams,
    max_length: int = 100,
) -> OracleReport:
    """Score every non-empty subset of the sample's predicates by direct row
    scans, then replay the greedy stopping rule on the per-level bests."""
    m = len(x)
    if m > ORACLE_MAX_FEATURES:
        raise OracleTooLarge(f"oracle enumeration needs M <= {ORACLE_MAX_FEATURES}, got {m}")
    alpha = params.alpha
    rows, labels = dataset.rows, dataset.labels
    n_classes = len(dataset.class_counts)
    class_sizes = [int(np.sum(labels == c)) for c in range(n_classes)]
    hit = rows == np.asarray(x, dtype=rows.dtype)[None, :]
    entries = []
    level_bests: list[OracleEntry | None] = []
    for k in range(1, m + 1):
        level_best = None
        for combo in itertools.combinations(range(m), k):
            matched = np.all(hit[:, list(combo)], axis=1)
            cov = int(matched.sum())
            if cov == 0:
                continue
            top = None
            for c in range(n_classes):
                if class_sizes[c] == 0:
                    continue
                pos = int(np.sum(matched & (labels == c)))
                a = alpha * pos / cov + (1 - alpha) * pos / class_sizes[c]
                if top is None or (a, pos) > (top[0], top[1]):
                    top = (a, pos, c)
            e = OracleEntry(tuple(Predicate(j, int(x[j])) for j in combo), top[2], top[0], cov, top[1])
            entries.append(e)
            if level_best is None or e.a_score > level_best.a_score:
                level_best = e
        level_bests.append(level_best)
    greedy = None
    stop = 1
    for k, lb in enumerate(level_bests[:max_length], start=1):
        stop = k
        if lb is None or (greedy is not None and lb.a_score <= greedy.a_score):
            break
        greedy = lb
    optimum = None
    for e in entries:
        if optimum is None or e.a_score > optimum.a_score or (
            e.a_score == optimum.a_score and len(e.itemset) < len(optimum.itemset)
        ):
            optimum = e
    return OracleReport(tuple(level_bests), greedy, optimum, tuple(entries), stop)


def predict(
    x: Sequence[int],
    dataset: Dataset,
    index: PredicateIndex,
    params: SearchParams,
) -> SearchResult:
    if params.engine == "naive":
        return run_naive(x, dataset, index, params)
    if params.engine == "oracle":
        report = run_oracle(x, dataset, params.score_params, params.max_length)
        if report.greedy is None:
            return _fallback(dataset, report.stopped_at_level, Counters())
        g = report.greedy
        bits = index.all_rows
        for p in g.itemset:
            bits &= index.bits(p.feature, p.value)
        _, cand = best_label_for(
            g.itemset, counts_from_bits(bits, index), dataset.class_counts, params.score_params, bits
        )
        return SearchResult(cand, cand.rule.label, report.stopped_at_level, None, Counters(),
                            tuple(e.a_score for e in report.level_bests[:report.stopped_at_level] if e))
    return run_pic(x, dataset, index, params)


# -- batch prediction --------------------------------------------------------

_WORKER: dict = {}


def _init_worker(dataset, index, params):
    _WORKER["args"] = (dataset, index, params)


def _predict_chunk(rows):
    dataset, index, params = _WORKER["args"]
    return [predict(x, dataset, index, params) for x in rows]


def predict_many(
    samples: np.ndarray | Sequence[Sequence[int]],
    dataset: Dataset,
    index: PredicateIndex,
    params: SearchParams,
    workers: int = 1,
) -> list[SearchResult]:
    """Search every sample; results come back in input order for any ``workers``."""
    samples = [tuple(int(v) for v in x) for x in samples]
    if workers <= 1 or len(samples) < 2:
        return [predict(x, dataset, index, params) for x in samples]
    workers = min(workers, os.cpu_count() or 1, len(samples))
    size = max(1, math.ceil(len(samples) / (workers * 4)))
    chunks = [samples[i:i + size] for i in range(0, len(samples), size)]
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(dataset, index, params)) as ex:
        out = []
        for part in ex.map(_predict_chunk, chunks):
            out.extend(part)
    return out


def explanation_record(result: SearchResult, dataset: Dataset) -> dict:
    schema = dataset.schema
    rec = {
        "predicted_label": schema.classes[result.predicted_label],
        "rule": None,
        "rule_text": None,
        "a_score": None,
        "precision": None,
        "recall": None,
        "stopped_at_level": result.stopped_at_level,
        "fallback": result.fallback,
        "counters": asdict(result.counters),
    }
    if result.rule is not None:
        from .rules import render_rule

        rec["rule"] = rule_record(result.rule, schema, dataset.vocabulary, dataset.discretizer)
        rec["rule_text"] = render_rule(result.rule.rule, schema, dataset.vocabulary)
        rec["a_score"] = result.rule.a_score
        rec["precision"] = result.rule.precision
        rec["recall"] = result.rule.recall
    return rec


def check_match(result: SearchResult, x: Sequence[int]) -> bool:
    return result.rule is None or match(result.rule.itemset, x)


__all__ = [
    "SearchParams", "Counters", "LevelState", "SearchResult", "OracleReport", "OracleEntry",
    "OracleTooLarge", "seed_level_one", "generate_candidates", "run_pic", "run_naive",
    "run_oracle", "predict", "predict_many", "explanation_record", "Rule",
]
