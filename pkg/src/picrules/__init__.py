"""Lazy per-sample rule classifier.

For every query row the search builds one short conjunctive rule from the
row's own feature values, choosing the rule that best trades precision
against recall on the training data.
"""
from .data import (
    DataError,
    Dataset,
    Discretizer,
    PredicateIndex,
    RawTable,
    Schema,
    build_index,
    encode,
    fit_discretizer,
    load_dataset,
)
from .rules import Predicate, Rule, ScoredCandidate, ScoreParams, make_itemset
from .search import SearchParams, SearchResult, predict, predict_many, run_naive, run_oracle, run_pic
from .evaluation import CvConfig, EvalReport, compare_rule_sets, rule_frequency_histogram, run_cv

__version__ = "0.1.0"

__all__ = [
    "DataError", "Dataset", "Discretizer", "PredicateIndex", "RawTable", "Schema",
    "build_index", "encode", "fit_discretizer", "load_dataset",
    "Predicate", "Rule", "ScoredCandidate", "ScoreParams", "make_itemset",
    "SearchParams", "SearchResult", "predict", "predict_many", "run_naive", "run_oracle", "run_pic",
    "CvConfig", "EvalReport", "compare_rule_sets", "rule_frequency_histogram", "run_cv",
]
