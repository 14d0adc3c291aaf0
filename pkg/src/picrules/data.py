"""Dataset ingestion, equal-width discretization, encoding and the bitset index."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

MISSING = "?"
UNSEEN = -1
CATEGORICAL = "categorical"
NUMERIC = "numeric"
DEFAULT_BINS = 5


class DataError(ValueError):
    """Raised for malformed input files or inconsistent configuration."""

    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        self.source = source
        self.line = line
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


class ConfigMismatch(DataError):
    """Configuration names a feature the data does not have."""


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str = CATEGORICAL
    bins: int = DEFAULT_BINS


@dataclass(frozen=True)
class Schema:
    features: tuple[FeatureSpec, ...]
    classes: tuple[str, ...]
    target_column: str
    missing_token: str = MISSING

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise DataError("duplicate feature names")
        if not self.classes or len(set(self.classes)) != len(self.classes):
            raise DataError("class list must be non-empty and duplicate-free")
        for f in self.features:
            if f.kind not in (CATEGORICAL, NUMERIC):
                raise DataError(f"unknown feature kind {f.kind!r} for {f.name}")
            if f.kind == NUMERIC and f.bins < 2:
                raise DataError(f"numeric feature {f.name} needs at least 2 bins")

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def feature_index(self, name: str) -> int:
        for j, f in enumerate(self.features):
            if f.name == name:
                return j
        raise KeyError(name)

    def class_id(self, label) -> int:
        return self.classes.index(str(label))

    def select(self, names: Sequence[str]) -> tuple["Schema", list[int]]:
        """Schema restricted to ``names`` plus the column positions kept."""
        cols = []
        for name in names:
            try:
                cols.append(self.feature_index(name))
            except KeyError:
                raise ConfigMismatch(f"unknown feature {name!r}") from None
        feats = tuple(self.features[j] for j in cols)
        return Schema(feats, self.classes, self.target_column, self.missing_token), cols


@dataclass(frozen=True)
class RawTable:
    """Parsed but unencoded rows: original strings, labels as strings."""

    values: tuple[tuple[str, ...], ...]
    labels: tuple[str, ...] | None

    def __len__(self) -> int:
        return len(self.values)

    def take(self, idx: Iterable[int]) -> "RawTable":
        idx = list(idx)
        labels = None if self.labels is None else tuple(self.labels[i] for i in idx)
        return RawTable(tuple(self.values[i] for i in idx), labels)

    def columns(self, cols: Sequence[int]) -> "RawTable":
        return RawTable(tuple(tuple(r[j] for j in cols) for r in self.values), self.labels)


def _is_number(text: str) -> bool:
    try:
        value = float(text)
    except ValueError:
        return False
    return math.isfinite(value)


def _class_sort_key(labels: Iterable[str]):
    labels = list(labels)
    if all(_is_number(x) for x in labels):
        return sorted(labels, key=lambda s: (float(s), s))
    return sorted(labels)


def _read_rows(source, delimiter: str) -> tuple[str, list[tuple[int, list[str]]]]:
    if isinstance(source, (str, Path)):
        name = str(source)
        try:
            with open(source, newline="", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise DataError(f"cannot read file: {exc.strerror}", name) from exc
        except UnicodeDecodeError as exc:
            raise DataError("file is not valid UTF-8", name) from exc
    else:
        name = getattr(source, "name", "<stream>")
        text = source.read()
    reader = csv.reader(io.StringIO(text), delimiter=delimiter, skipinitialspace=True)
    rows = []
    try:
        for row in reader:
            rows.append((reader.line_num, [cell.strip() for cell in row]))
    except csv.Error as exc:
        raise DataError(str(exc), name, reader.line_num) from exc
    return name, rows


def load_dataset(
    source: str | Path | TextIO,
    target: str | None = None,
    *,
    delimiter: str = ",",
    missing: str = MISSING,
    bins: int = DEFAULT_BINS,
    feature_bins: Mapping[str, int] | None = None,
    kinds: Mapping[str, str] | None = None,
    require_target: bool = True,
    schema: Schema | None = None,
) -> tuple[Schema, RawTable]:
    """Parse a delimited file with a header row.

    ``target`` defaults to the last column. Kinds are inferred per column
    (numeric iff every non-missing value parses as a number) unless given in
    ``kinds``. When ``schema`` is passed (e.g. for a test file) the columns are
    matched against it by name and the target may be absent if
    ``require_target`` is false.
    """
    name, numbered = _read_rows(source, delimiter)
    numbered = [(n, r) for n, r in numbered if any(cell for cell in r)]
    if not numbered:
        raise DataError("empty dataset: no header row", name)
    header_line, header = numbered[0]
    body = [r for _, r in numbered[1:]]
    linenos = [n for n, _ in numbered[1:]]
    if len(set(header)) != len(header):
        raise DataError("duplicate column names in header", name, header_line)
    for lineno, row in zip(linenos, body):
        if len(row) != len(header):
            raise DataError(f"expected {len(header)} fields, got {len(row)}", name, lineno)

    if schema is not None:
        target = schema.target_column
    elif target is None:
        target = header[-1]
    has_target = target in header
    if not has_target and (require_target or schema is None):
        raise DataError(f"target column not found: {target!r}", name)

    if schema is not None:
        try:
            cols = [header.index(f.name) for f in schema.features]
        except ValueError:
            missing_cols = [f.name for f in schema.features if f.name not in header]
            raise DataError(f"missing feature columns: {', '.join(missing_cols)}", name) from None
    else:
        cols = [j for j, h in enumerate(header) if h != target]
    t = header.index(target) if has_target else None

    values = tuple(tuple(row[j] for j in cols) for row in body)
    labels = tuple(row[t] for row in body) if t is not None else None
    if labels is not None:
        for lineno, lab in zip(linenos, labels):
            if lab == "" or lab == missing:
                raise DataError("missing class label", name, lineno)

    if schema is None:
        if not body:
            raise DataError("empty dataset: no data rows", name)
        kinds = dict(kinds or {})
        feature_bins = dict(feature_bins or {})
        unknown = (set(kinds) | set(feature_bins)) - {header[j] for j in cols}
        if unknown:
            raise ConfigMismatch(f"unknown feature(s) in config: {', '.join(sorted(unknown))}", name)
        specs = []
        for pos, j in enumerate(cols):
            fname = header[j]
            kind = kinds.get(fname)
            if kind is None:
                present = [r[pos] for r in values if r[pos] != missing and r[pos] != ""]
                kind = NUMERIC if present and all(_is_number(v) for v in present) else CATEGORICAL
            specs.append(FeatureSpec(fname, kind, int(feature_bins.get(fname, bins))))
        schema = Schema(tuple(specs), tuple(_class_sort_key(set(labels))), target, missing)
    elif labels is not None:
        unknown = sorted(set(labels) - set(schema.classes))
        if unknown:
            raise DataError(f"unknown class label(s): {', '.join(unknown)}", name)
    values = tuple(tuple(missing if v == "" else v for v in r) for r in values)
    return schema, RawTable(values, labels)


@dataclass(frozen=True)
class Discretizer:
    """Equal-width bins per numeric feature; ``None`` entries are categorical."""

    ranges: tuple[tuple[float, float, int] | None, ...]

    def bin(self, j: int, x: float) -> int:
        lo, hi, g = self.ranges[j]
        if hi <= lo:
            return 0
        if x <= lo:
            return 0
        if x >= hi:
            return g - 1
        b = math.floor((x - lo) * g / (hi - lo))
        return min(max(b, 0), g - 1)

    def edges(self, j: int) -> list[float]:
        lo, hi, g = self.ranges[j]
        return [lo + i * (hi - lo) / g for i in range(g + 1)]


def fit_discretizer(raw: RawTable, schema: Schema) -> Discretizer:
    ranges = []
    for j, spec in enumerate(schema.features):
        if spec.kind != NUMERIC:
            ranges.append(None)
            continue
        xs = []
        for row in raw.values:
            v = row[j]
            if v == schema.missing_token:
                continue
            try:
                xs.append(float(v))
            except ValueError:
                raise DataError(f"non-numeric value {v!r} in numeric feature {spec.name}") from None
        if not xs:
            raise DataError(f"numeric feature {spec.name} has no non-missing training values")
        ranges.append((min(xs), max(xs), spec.bins))
    return Discretizer(tuple(ranges))


@dataclass(frozen=True)
class Vocabulary:
    """Per-feature value labels; position in each tuple is the value id."""

    values: tuple[tuple[str, ...], ...]
    lookup: tuple[Mapping[str, int], ...] = field(repr=False, compare=False)

    @classmethod
    def from_values(cls, values: Sequence[Sequence[str]]) -> "Vocabulary":
        values = tuple(tuple(v) for v in values)
        return cls(values, tuple({v: i for i, v in enumerate(vs)} for vs in values))

    def label(self, j: int, v: int) -> str:
        if v == UNSEEN or v >= len(self.values[j]):
            return "<unseen>"
        return self.values[j][v]

    def value_id(self, j: int, label: str) -> int:
        return self.lookup[j].get(label, UNSEEN)


def bin_label(b: int) -> str:
    return f"bin{b}"


def fit_vocabulary(raw: RawTable, schema: Schema) -> Vocabulary:
    """Categorical ids in first-appearance order; numeric ids are bin numbers."""
    out = []
    for j, spec in enumerate(schema.features):
        if spec.kind == NUMERIC:
            out.append([bin_label(b) for b in range(spec.bins)] + [schema.missing_token])
            continue
        seen: dict[str, None] = {}
        for row in raw.values:
            seen.setdefault(row[j], None)
        out.append(list(seen))
    return Vocabulary.from_values(out)


@dataclass(frozen=True)
class Dataset:
    schema: Schema
    rows: np.ndarray
    labels: np.ndarray | None
    class_counts: tuple[int, ...]
    vocabulary: Vocabulary
    discretizer: Discretizer

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def majority_class(self) -> int:
        counts = self.class_counts
        return max(range(len(counts)), key=lambda c: (counts[c], -c))


def encode_value(j: int, text: str, schema: Schema, disc: Discretizer, vocab: Vocabulary) -> int:
    spec = schema.features[j]
    if spec.kind == NUMERIC and text != schema.missing_token:
        return disc.bin(j, float(text))
    return vocab.value_id(j, text)


def encode(
    raw: RawTable,
    schema: Schema,
    discretizer: Discretizer,
    vocabulary: Vocabulary | None = None,
) -> Dataset:
    """Encode ``raw`` to integer ids.

    Without ``vocabulary`` the dictionaries are fitted on ``raw`` itself (the
    training side); pass the training vocabulary to encode held-out rows.
    """
    if vocabulary is None:
        vocabulary = fit_vocabulary(raw, schema)
    m = schema.n_features
    rows = np.empty((len(raw), m), dtype=np.int64)
    for i, row in enumerate(raw.values):
        for j in range(m):
            rows[i, j] = encode_value(j, row[j], schema, discretizer, vocabulary)
    labels = None
    counts = (0,) * schema.n_classes
    if raw.labels is not None:
        labels = np.array([schema.class_id(y) for y in raw.labels], dtype=np.int64)
        counts = tuple(int(n) for n in np.bincount(labels, minlength=schema.n_classes))
    rows.setflags(write=False)
    if labels is not None:
        labels.setflags(write=False)
    return Dataset(schema, rows, labels, counts, vocabulary, discretizer)


def _pack(mask: np.ndarray) -> int:
    return int.from_bytes(np.packbits(mask, bitorder="little").tobytes(), "little")


def bit_indices(bits: int) -> list[int]:
    out = []
    while bits:
        low = bits & -bits
        out.append(low.bit_length() - 1)
        bits ^= low
    return out


@dataclass(frozen=True)
class PredicateIndex:
    """Vertical layout: row-membership bitsets per (feature, value[, class]).

    Bit ``i`` of an entry is set iff training row ``i`` holds that value (and
    that label). Python ints serve as arbitrary-width bitsets.
    """

    coverage: tuple[tuple[int, ...], ...]
    class_bits: tuple[tuple[tuple[int, ...], ...], ...]
    class_masks: tuple[int, ...]
    class_counts: tuple[int, ...]
    n_rows: int

    def bits(self, feature: int, value: int) -> int:
        col = self.coverage[feature]
        if value < 0 or value >= len(col):
            return 0
        return col[value]

    def class_bitset(self, feature: int, value: int, c: int) -> int:
        col = self.class_bits[feature]
        if value < 0 or value >= len(col):
            return 0
        return col[value][c]

    @property
    def all_rows(self) -> int:
        return (1 << self.n_rows) - 1


def build_index(ds: Dataset) -> PredicateIndex:
    if ds.labels is None:
        raise DataError("cannot index an unlabeled dataset")
    n_classes = ds.schema.n_classes
    masks = tuple(_pack(ds.labels == c) for c in range(n_classes))
    coverage = []
    class_bits = []
    for j in range(ds.schema.n_features):
        col = ds.rows[:, j]
        n_values = len(ds.vocabulary.values[j])
        cov_j = []
        cls_j = []
        for v in range(n_values):
            bits = _pack(col == v)
            cov_j.append(bits)
            cls_j.append(tuple(bits & m for m in masks))
        coverage.append(tuple(cov_j))
        class_bits.append(tuple(cls_j))
    return PredicateIndex(tuple(coverage), tuple(class_bits), masks, ds.class_counts, ds.n_rows)
