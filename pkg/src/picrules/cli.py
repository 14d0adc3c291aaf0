"""Command-line interface: ``pic predict | crossval | oracle-check | rules-compare``.

Exit codes: 0 ok, 1 engines disagree, 2 I/O or parse error, 3 configuration error.
Every option can also be set through an environment variable named ``PIC_``
plus the option's destination in upper case (``PIC_THREADS``, ``PIC_ALPHA``...).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from .data import CATEGORICAL, NUMERIC, ConfigMismatch, DataError, RawTable, build_index, encode, fit_discretizer, load_dataset
from .evaluation import (
    CvConfig,
    check_vocabulary,
    compare_rule_sets,
    histogram_json,
    load_rule_file,
    matching_methods,
    rule_frequency_histogram,
    rule_text,
    rule_to_json,
    run_cv,
    schema_vocabulary,
    write_accuracy_csv,
    write_histogram_csv,
    write_json,
)
from .search import (
    ORACLE_MAX_FEATURES,
    SearchParams,
    explanation_record,
    predict_many,
    run_naive,
    run_oracle,
    run_pic,
)

log = logging.getLogger("picrules")

EXIT_OK, EXIT_DISAGREE, EXIT_IO, EXIT_CONFIG = 0, 1, 2, 3


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _feature_bins(items):
    out = {}
    for item in items or ():
        name, sep, g = item.rpartition("=")
        if not sep or not name:
            raise ConfigError(f"--feature-bins expects NAME=COUNT, got {item!r}")
        try:
            out[name] = int(g)
        except ValueError:
            raise ConfigError(f"--feature-bins count must be an integer, got {g!r}") from None
    return out


def _names(text):
    return [t for t in (text or "").split(",") if t]


def _add_data_options(p):
    p.add_argument("--target", help="target column (default: last column)")
    p.add_argument("--delimiter", default=",", help="field delimiter (default ',')")
    p.add_argument("--missing", default="?", help="missing-value token (default '?')")
    p.add_argument("--bins", type=int, default=5, help="equal-width bins for numeric features")
    p.add_argument("--feature-bins", action="append", metavar="NAME=COUNT", help="per-feature bin count")
    p.add_argument("--categorical", metavar="NAMES", help="comma-separated features forced categorical")
    p.add_argument("--numeric", metavar="NAMES", help="comma-separated features forced numeric")
    p.add_argument("--all-categorical", action="store_true", help="treat every feature as categorical")
    p.add_argument("--features", metavar="NAMES", help="only use these comma-separated features")


def _add_search_options(p, engines=("pic", "naive")):
    p.add_argument("--alpha", type=float, default=0.9, help="precision weight in the rule score")
    p.add_argument("--max-length", type=int, default=100, help="longest rule searched")
    p.add_argument("--engine", choices=engines, default="pic")
    p.add_argument("--threads", type=int, default=1, help="worker processes")


def _add_output_options(p, formats=("json", "csv")):
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    p.add_argument("--format", choices=formats, default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pic", description="Per-sample interpretable rule classifier.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("predict", help="explain and classify every row of a test file")
    p.add_argument("--train", "--dataset", dest="dataset", required=True)
    p.add_argument("--test", required=True)
    _add_data_options(p)
    _add_search_options(p)
    _add_output_options(p)

    p = sub.add_parser("crossval", help="repeated k-fold cross-validation")
    p.add_argument("--dataset", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--unstratified", action="store_true")
    p.add_argument("--holdout", type=int, help="hold out N rows per repeat instead of k folds")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figures next to the report")
    p.add_argument("--timing", action="store_true", help="include wall time in the report")
    _add_data_options(p)
    _add_search_options(p)
    _add_output_options(p)

    p = sub.add_parser("oracle-check", help="compare pic, naive and exhaustive search row by row")
    p.add_argument("--dataset", required=True)
    p.add_argument("--test", help="query rows (default: every dataset row)")
    p.add_argument("--limit", type=int, help="check at most this many rows")
    _add_data_options(p)
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--max-length", type=int, default=100)
    _add_output_options(p)

    p = sub.add_parser("rules-compare", help="split our rules into common and personalized")
    p.add_argument("--dataset", required=True, help="dataset defining the feature/value vocabulary")
    p.add_argument("--ours", required=True, help="crossval report or rule JSON")
    p.add_argument("--theirs", required=True, help="external rule JSON")
    _add_data_options(p)
    _add_output_options(p)
    return parser


def _apply_env(parser: argparse.ArgumentParser, env=None) -> None:
    env = os.environ if env is None else env
    subs = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
    parsers = [parser] + [sp for a in subs for sp in a.choices.values()]
    for p in parsers:
        for action in p._actions:
            if not action.option_strings or action.dest in ("help",):
                continue
            key = "PIC_" + action.dest.upper()
            if key not in env:
                continue
            raw = env[key]
            if isinstance(action, argparse._StoreTrueAction):
                value = raw.strip().lower() in ("1", "true", "yes", "on")
            elif isinstance(action, argparse._AppendAction):
                value = [v for v in raw.split(";") if v]
            else:
                try:
                    value = action.type(raw) if action.type else raw
                except ValueError:
                    raise ConfigError(f"{key}: invalid value {raw!r}") from None
            action.default = value
            action.required = False


def _kinds(args):
    kinds = {}
    for n in _names(args.categorical):
        kinds[n] = CATEGORICAL
    for n in _names(args.numeric):
        kinds[n] = NUMERIC
    return kinds


def _load(args, path):
    if args.bins < 2:
        raise ConfigError("--bins must be at least 2")
    bins = _feature_bins(args.feature_bins)
    if any(g < 2 for g in bins.values()):
        raise ConfigError("--feature-bins counts must be at least 2")
    kinds = _kinds(args)
    if args.all_categorical:
        schema, raw = load_dataset(path, args.target, delimiter=args.delimiter, missing=args.missing)
        kinds = {f.name: CATEGORICAL for f in schema.features} | kinds
    try:
        schema, raw = load_dataset(path, args.target, delimiter=args.delimiter, missing=args.missing,
                                   bins=args.bins, feature_bins=bins, kinds=kinds)
        if args.features:
            schema, cols = schema.select(_names(args.features))
            raw = raw.columns(cols)
    except ConfigMismatch as exc:
        raise ConfigError(str(exc)) from exc
    return schema, raw


def _search_params(args, engine=None) -> SearchParams:
    if not 0.0 <= args.alpha <= 1.0:
        raise ConfigError(f"--alpha must lie in [0, 1], got {args.alpha}")
    if args.max_length < 1:
        raise ConfigError("--max-length must be at least 1")
    if getattr(args, "threads", 1) < 1:
        raise ConfigError("--threads must be at least 1")
    return SearchParams(args.alpha, args.max_length, engine or getattr(args, "engine", "pic"))


def _emit(text: str, output: str | None) -> None:
    if output:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _load_test(args, schema, path):
    with open(path, encoding="utf-8") as fh:
        if not fh.read().strip():
            return RawTable((), None)
    _, raw = load_dataset(path, delimiter=args.delimiter, missing=args.missing,
                          schema=schema, require_target=False)
    return raw


def cmd_predict(args) -> int:
    params = _search_params(args)
    schema, train = _load(args, args.dataset)
    try:
        test = _load_test(args, schema, args.test)
    except OSError as exc:
        raise DataError(f"cannot read file: {exc.strerror}", args.test) from exc
    disc = fit_discretizer(train, schema)
    ds = encode(train, schema, disc)
    index = build_index(ds)
    try:
        encoded = encode(RawTable(test.values, None), schema, disc, ds.vocabulary)
    except ValueError as exc:
        raise DataError(f"cannot encode test rows: {exc}", args.test) from exc
    results = predict_many(encoded.rows, ds, index, params, workers=args.threads)
    records = []
    for i, res in enumerate(results):
        rec = {"row": i, **explanation_record(res, ds)}
        if test.labels is not None:
            rec["actual"] = test.labels[i]
        records.append(rec)
    if test.labels is not None and records:
        acc = sum(r["predicted_label"] == r["actual"] for r in records) / len(records)
        print(f"accuracy {acc:.4f} on {len(records)} rows", file=sys.stderr)
    if args.format == "json":
        _emit(json.dumps(records, indent=2) + "\n", args.output)
    else:
        counter_keys = ["generated", "scored", "pruned_by_ub", "pruned_by_con", "pruned_by_subrule"]
        header = ["row", "predicted_label", "rule_text", "a_score", "precision", "recall", "length",
                  "stopped_at_level", "fallback"] + counter_keys
        if test.labels is not None:
            header.append("actual")
        rows = []
        for r in records:
            row = [r["row"], r["predicted_label"], r["rule_text"] or "", _num(r["a_score"]),
                   _num(r["precision"]), _num(r["recall"]), r["rule"]["length"] if r["rule"] else "",
                   r["stopped_at_level"], r["fallback"] or ""]
            row += [r["counters"][k] for k in counter_keys]
            if test.labels is not None:
                row.append(r["actual"])
            rows.append(row)
        _emit(_csv_text(header, rows), args.output)
    return EXIT_OK


def _num(x):
    return "" if x is None else repr(x)


def _companion(output: str, suffix: str) -> Path:
    p = Path(output)
    return p.with_name(f"{p.stem}_{suffix}")


def cmd_crossval(args) -> int:
    params = _search_params(args)
    try:
        config = CvConfig(args.folds, args.repeats, args.seed, not args.unstratified, params, args.holdout)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    schema, raw = _load(args, args.dataset)
    try:
        report = run_cv(raw, schema, config, workers=args.threads)
    except DataError as exc:
        # stratification or holdout impossible for this dataset
        raise ConfigError(str(exc)) from exc
    log.info("cross-validation finished in %.2fs", report.wall_time)
    hist = rule_frequency_histogram(report)
    print(f"accuracy_mean {report.accuracy_mean:.4f}")
    print(f"avg_rule_length {report.avg_rule_length:.3f}")
    print(f"distinct_rules pooled {report.n_distinct_rules} per-run-mean {report.mean_distinct_rules_per_run:.1f}")
    if not args.output:
        return EXIT_OK
    if args.format == "json":
        write_json(report.to_json(include_timing=args.timing), args.output)
    else:
        write_accuracy_csv(report, args.output)
    write_accuracy_csv(report, _companion(args.output, "accuracy.csv"))
    write_histogram_csv(hist, _companion(args.output, "histogram.csv"))
    write_json(histogram_json(hist), _companion(args.output, "histogram.json"))
    if not args.no_plot:
        from .plotting import plot_accuracy_runs, plot_rule_histogram

        title = f"{Path(args.dataset).stem}, alpha={params.alpha}"
        plot_rule_histogram(hist, _companion(args.output, "rules.png"), title=title)
        plot_accuracy_runs(report.accuracy_per_run, _companion(args.output, "accuracy.png"), title=title)
    return EXIT_OK


def _scores_agree(scores, tol=1e-12) -> bool:
    if any(s is None for s in scores):
        return all(s is None for s in scores)
    return max(scores) - min(scores) <= tol


def cmd_oracle_check(args) -> int:
    params = _search_params(args, engine="pic")
    schema, train = _load(args, args.dataset)
    if schema.n_features > ORACLE_MAX_FEATURES:
        raise DataError(f"oracle check needs at most {ORACLE_MAX_FEATURES} features, "
                        f"dataset has {schema.n_features}", args.dataset)
    disc = fit_discretizer(train, schema)
    ds = encode(train, schema, disc)
    index = build_index(ds)
    if args.test:
        test = _load_test(args, schema, args.test)
        rows = encode(RawTable(test.values, None), schema, disc, ds.vocabulary).rows
    else:
        rows = ds.rows
    if args.limit is not None:
        rows = rows[: args.limit]
    diffs = []
    for i, x in enumerate(rows):
        x = tuple(int(v) for v in x)
        pic = run_pic(x, ds, index, params)
        naive = run_naive(x, ds, index, params)
        oracle = run_oracle(x, ds, params.score_params, params.max_length).greedy
        scores = (pic.a_score, naive.a_score, None if oracle is None else oracle.a_score)
        items = (
            None if pic.rule is None else pic.rule.itemset,
            None if naive.rule is None else naive.rule.itemset,
            None if oracle is None else oracle.itemset,
        )
        if not _scores_agree(scores) or len(set(items)) != 1:
            diffs.append({"row": i, "pic": scores[0], "naive": scores[1], "oracle": scores[2]})
    summary = {"rows": len(rows), "disagreements": diffs}
    if args.format == "json":
        _emit(json.dumps(summary, indent=2) + "\n", args.output)
    else:
        _emit(_csv_text(["row", "pic", "naive", "oracle"],
                        [[d["row"], d["pic"], d["naive"], d["oracle"]] for d in diffs]), args.output)
    print(f"checked {len(rows)} rows, {len(diffs)} disagreements", file=sys.stderr)
    return EXIT_DISAGREE if diffs else EXIT_OK


def cmd_rules_compare(args) -> int:
    schema, raw = _load(args, args.dataset)
    vocab = schema_vocabulary(schema, raw)
    ours = load_rule_file(args.ours)
    theirs = load_rule_file(args.theirs)
    check_vocabulary(ours, schema, vocab, args.ours)
    check_vocabulary(theirs, schema, vocab, args.theirs)
    counts = {}
    for er in ours:
        counts.setdefault(er.rule, er)
    common, personalized = compare_rule_sets(list(counts), theirs)
    print(f"common {len(common)} personalized {len(personalized)}", file=sys.stderr)
    if args.format == "json":
        out = {
            "common": [rule_to_json(r, methods=matching_methods(r, theirs)) for r in common],
            "personalized": [rule_to_json(r) for r in personalized],
        }
        _emit(json.dumps(out, indent=2) + "\n", args.output)
    else:
        rows = [["common", rule_text(r), ";".join(matching_methods(r, theirs))] for r in common]
        rows += [["personalized", rule_text(r), ""] for r in personalized]
        _emit(_csv_text(["kind", "rule_text", "methods"], rows), args.output)
    return EXIT_OK


COMMANDS = {
    "predict": cmd_predict,
    "crossval": cmd_crossval,
    "oracle-check": cmd_oracle_check,
    "rules-compare": cmd_rules_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        _apply_env(parser)
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
