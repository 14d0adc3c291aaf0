import io
from pathlib import Path

import numpy as np
import pytest

from picrules.data import RawTable, build_index, encode, fit_discretizer, load_dataset

DATA = Path(__file__).resolve().parent.parent / "data"

TABLE1 = """f1,f2,f3,f4,Class
a1,b1,c1,d1,1
a1,b2,c1,d2,1
a2,b3,c2,d1,1
a1,b2,c2,d1,2
a2,b3,c1,d2,2
a3,b1,c2,d1,2
a1,b2,c2,d2,2
"""
TABLE1_QUERY = ("a1", "b3", "c2", "d1")


class Fitted:
    """Schema, raw rows, encoded dataset and index for one training table."""

    def __init__(self, schema, raw):
        self.schema = schema
        self.raw = raw
        self.disc = fit_discretizer(raw, schema)
        self.ds = encode(raw, schema, self.disc)
        self.index = build_index(self.ds)

    def encode_query(self, values):
        enc = encode(RawTable((tuple(values),), None), self.schema, self.disc, self.ds.vocabulary)
        return tuple(int(v) for v in enc.rows[0])


@pytest.fixture(scope="session")
def table1():
    schema, raw = load_dataset(io.StringIO(TABLE1), "Class")
    return Fitted(schema, raw)


@pytest.fixture(scope="session")
def table1_query(table1):
    return table1.encode_query(TABLE1_QUERY)


def random_instance(seed, n_max=60, m_max=8, c_max=3):
    """Small random categorical problem plus one query row and an alpha."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    c = int(rng.integers(2, c_max + 1))
    arity = rng.integers(2, 5, size=m)
    rows = [tuple(f"v{rng.integers(arity[j])}" for j in range(m)) for _ in range(n)]
    labels = [f"y{rng.integers(c)}" for _ in range(n)]
    # guarantee every class appears so recall denominators are positive
    for k in range(min(c, n)):
        labels[k] = f"y{k}"
    header = ",".join([f"f{j}" for j in range(m)] + ["class"])
    body = "\n".join(",".join(r + (y,)) for r, y in zip(rows, labels))
    schema, raw = load_dataset(io.StringIO(header + "\n" + body + "\n"), "class")
    fitted = Fitted(schema, raw)
    if rng.random() < 0.7:
        query = rows[int(rng.integers(n))]
    else:
        query = tuple(f"v{rng.integers(arity[j])}" for j in range(m))
    alpha = float(rng.choice([0.5, 0.7, 0.9]))
    return fitted, fitted.encode_query(query), alpha


def scan_counts(ds, itemset):
    """Brute-force row scan: (coverage, per-class positives)."""
    per_class = [0] * len(ds.class_counts)
    for row, y in zip(ds.rows, ds.labels):
        if all(row[p.feature] == p.value for p in itemset):
            per_class[int(y)] += 1
    return sum(per_class), tuple(per_class)
