"""Predicates, itemsets, rules and the quantities used to score and bound them."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

from .data import PredicateIndex, Vocabulary, Schema, NUMERIC


class Predicate(NamedTuple):
    feature: int
    value: int


Itemset = tuple  # tuple[Predicate, ...], strictly increasing feature indices


def make_itemset(predicates: Iterable[Predicate | tuple[int, int]]) -> Itemset:
    items = tuple(sorted(Predicate(*p) for p in predicates))
    if not items:
        raise ValueError("an itemset needs at least one predicate")
    for a, b in zip(items, items[1:]):
        if a.feature == b.feature:
            raise ValueError(f"two predicates on feature {a.feature}")
    return items


def is_subset(small: Itemset, big: Itemset) -> bool:
    return set(small) <= set(big)


@dataclass(frozen=True)
class Rule:
    itemset: Itemset
    label: int

    @property
    def length(self) -> int:
        return len(self.itemset)


@dataclass(frozen=True)
class ScoreParams:
    alpha: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class ScoredCandidate:
    rule: Rule
    coverage: int
    positive: int
    per_class_positive: tuple[int, ...]
    per_class_support: tuple[float, ...]
    precision: float
    recall: float
    a_score: float
    con: float
    bits: int = field(default=0, repr=False, compare=False)

    @property
    def itemset(self) -> Itemset:
        return self.rule.itemset

    @property
    def length(self) -> int:
        return self.rule.length


class ZeroCoverageError(ValueError):
    """The itemset matches no training row, so its score is undefined."""


def match(itemset: Itemset, x: Sequence[int]) -> bool:
    return all(x[p.feature] == p.value for p in itemset)


def itemset_bits(itemset: Itemset, index: PredicateIndex) -> int:
    bits = index.all_rows
    for p in itemset:
        bits &= index.bits(p.feature, p.value)
        if not bits:
            break
    return bits


def counts_from_bits(bits: int, index: PredicateIndex) -> tuple[int, tuple[int, ...]]:
    per_class = tuple((bits & m).bit_count() for m in index.class_masks)
    return sum(per_class), per_class


def count_coverage(itemset: Itemset, index: PredicateIndex) -> tuple[int, tuple[int, ...]]:
    """Rows matching ``itemset`` in total and per class."""
    return counts_from_bits(itemset_bits(itemset, index), index)


def _a_score(alpha: float, positive: int, coverage: int, n_class: int) -> float:
    return alpha * (positive / coverage) + (1.0 - alpha) * (positive / n_class)


def support_vector(per_class_positive: Sequence[int], class_counts: Sequence[int]) -> tuple[float, ...]:
    return tuple(p / n if n else 0.0 for p, n in zip(per_class_positive, class_counts))


def con_bound(per_class_support: Sequence[float], params: ScoreParams) -> float:
    """Ceiling on the score of any rule whose itemset extends this one."""
    return params.alpha + (1.0 - params.alpha) * max(per_class_support)


def score(
    rule: Rule,
    counts: tuple[int, Sequence[int]],
    class_counts: Sequence[int],
    params: ScoreParams,
    bits: int = 0,
) -> ScoredCandidate:
    coverage, per_class = counts
    if coverage <= 0:
        raise ZeroCoverageError("cannot score a rule that covers no training row")
    n_y = class_counts[rule.label]
    if n_y <= 0:
        raise ValueError(f"class {rule.label} has no training rows")
    positive = per_class[rule.label]
    supports = support_vector(per_class, class_counts)
    return ScoredCandidate(
        rule=rule,
        coverage=coverage,
        positive=positive,
        per_class_positive=tuple(per_class),
        per_class_support=supports,
        precision=positive / coverage,
        recall=positive / n_y,
        a_score=_a_score(params.alpha, positive, coverage, n_y),
        con=con_bound(supports, params),
        bits=bits,
    )


def best_label_for(
    itemset: Itemset,
    counts: tuple[int, Sequence[int]],
    class_counts: Sequence[int],
    params: ScoreParams,
    bits: int = 0,
) -> tuple[int, ScoredCandidate]:
    """Label maximising the score; ties go to more positives, then the lower id."""
    coverage, per_class = counts
    if coverage <= 0:
        raise ZeroCoverageError("cannot label an itemset that covers no training row")
    best_key = None
    best_c = -1
    for c, n_c in enumerate(class_counts):
        if n_c <= 0:
            continue
        key = (_a_score(params.alpha, per_class[c], coverage, n_c), per_class[c])
        if best_key is None or key > best_key:
            best_key, best_c = key, c
    cand = score(Rule(itemset, best_c), counts, class_counts, params, bits)
    return best_c, cand


def sub_itemsets(itemset: Itemset) -> list[Itemset]:
    """All sub-itemsets one predicate shorter, in canonical order."""
    return [itemset[:i] + itemset[i + 1:] for i in range(len(itemset))]


def ub(
    itemset: Itemset,
    cache: Mapping[Itemset, ScoredCandidate],
    params: ScoreParams,
) -> float:
    """Pre-count bound on the best score any label can reach for ``itemset``.

    Takes, per class, the smallest support among the cached sub-itemsets one
    predicate shorter, then the largest of those minima. Every sub-itemset
    must be in ``cache``.
    """
    subs = []
    for s in sub_itemsets(itemset):
        try:
            subs.append(cache[s].per_class_support)
        except KeyError:
            raise KeyError(f"sub-itemset {s} missing from the candidate cache") from None
    n_classes = len(subs[0])
    best = max(min(sup[c] for sup in subs) for c in range(n_classes))
    return params.alpha + (1.0 - params.alpha) * best


def ub_min_con(itemset: Itemset, cache: Mapping[Itemset, ScoredCandidate]) -> float:
    """Looser diagnostic bound: the smallest ``con`` among the direct sub-itemsets."""
    return min(cache[s].con for s in sub_itemsets(itemset))


# -- rendering ---------------------------------------------------------------

def predicate_names(itemset: Itemset, schema: Schema, vocab: Vocabulary) -> list[tuple[str, str]]:
    return [(schema.features[p.feature].name, vocab.label(p.feature, p.value)) for p in itemset]


def render(named_predicates: Iterable[tuple[str, str]], label: str) -> str:
    body = " ".join(f"{{{f}={v}}}" for f, v in named_predicates)
    return f"{body} -> {label}"


def render_rule(rule: Rule, schema: Schema, vocab: Vocabulary) -> str:
    return render(predicate_names(rule.itemset, schema, vocab), schema.classes[rule.label])


def rule_record(cand: ScoredCandidate, schema: Schema, vocab: Vocabulary, discretizer=None) -> dict:
    preds = []
    for p in cand.itemset:
        entry = {"feature": schema.features[p.feature].name, "value": vocab.label(p.feature, p.value)}
        spec = schema.features[p.feature]
        if discretizer is not None and spec.kind == NUMERIC and p.value < spec.bins:
            edges = discretizer.edges(p.feature)
            entry["interval"] = [edges[p.value], edges[p.value + 1]]
        preds.append(entry)
    return {
        "predicates": preds,
        "label": schema.classes[cand.rule.label],
        "precision": cand.precision,
        "recall": cand.recall,
        "a_score": cand.a_score,
        "coverage": cand.coverage,
        "positive": cand.positive,
        "length": cand.length,
    }
