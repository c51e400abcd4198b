"""Frequency and probability tables over joint domains of discrete attributes.

Joint cells are indexed lexicographically with the attribute that comes first in
schema order as the most significant digit. Experiment metrics use base-2 logs;
the sensitivity constant and the accuracy analysis use natural logs, so every
information measure takes an explicit ``base``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .dp_core import InvalidParameterError, Sensitivity


class SchemaError(ValueError):
    """Unknown attribute, malformed row or mismatched schema."""


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered attributes, each with an ordered tuple of category labels."""

    attributes: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        names = [a for a, _ in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("attribute names must be unique")
        for name, dom in self.attributes:
            if len(dom) == 0:
                raise SchemaError(f"attribute {name!r} has an empty domain")

    @classmethod
    def from_sizes(cls, sizes: dict[str, int] | Sequence[tuple[str, int]]) -> "AttributeSchema":
        items = sizes.items() if isinstance(sizes, dict) else sizes
        return cls(tuple((n, tuple(str(v) for v in range(k))) for n, k in items))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.attributes)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown attribute {name!r}") from None

    def domain(self, name: str) -> tuple[str, ...]:
        return self.attributes[self.index(name)][1]

    def size(self, name: str) -> int:
        return len(self.domain(name))

    def ordered(self, attrs: Iterable[str]) -> tuple[str, ...]:
        """Deduplicate ``attrs`` and put them in schema order."""
        attrs = set(attrs)
        for a in attrs:
            self.index(a)
        return tuple(n for n in self.names if n in attrs)

    def sizes(self, attrs: Sequence[str]) -> tuple[int, ...]:
        return tuple(self.size(a) for a in attrs)

    def joint_size(self, attrs: Sequence[str] | None = None) -> int:
        attrs = self.names if attrs is None else attrs
        return int(np.prod(self.sizes(attrs), dtype=np.int64))


@dataclass(frozen=True)
class Dataset:
    """Rows of category indices, stored as an ``(n, N)`` integer array."""

    schema: AttributeSchema
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int64)
        if v.ndim == 1 and v.size == 0:
            v = v.reshape(0, len(self.schema.names))
        if v.ndim != 2 or v.shape[1] != len(self.schema.names):
            raise SchemaError("row width does not match schema")
        sizes = np.array(self.schema.sizes(self.schema.names))
        if v.size and ((v < 0).any() or (v >= sizes).any()):
            raise SchemaError("row value outside attribute domain")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_rows(cls, schema: AttributeSchema, rows: Iterable[Sequence[int]]) -> "Dataset":
        rows = list(rows)
        arr = np.array(rows, dtype=np.int64).reshape(len(rows), len(schema.names))
        return cls(schema, arr)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def rows(self) -> list[tuple[int, ...]]:
        return [tuple(int(x) for x in r) for r in self.values]

    def take(self, index) -> "Dataset":
        return Dataset(self.schema, self.values[np.asarray(index, dtype=np.int64)])

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.schema.index(name)]

    @staticmethod
    def concat(parts: Sequence["Dataset"]) -> "Dataset":
        if not parts:
            raise SchemaError("nothing to concatenate")
        schema = parts[0].schema
        if any(p.schema != schema for p in parts):
            raise SchemaError("cannot concatenate datasets with different schemas")
        return Dataset(schema, np.concatenate([p.values for p in parts], axis=0))


@dataclass(frozen=True)
class FrequencyTable:
    attrs: tuple[str, ...]
    sizes: tuple[int, ...]
    counts: np.ndarray
    n_source: float

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=float)
        if c.shape != (int(np.prod(self.sizes, dtype=np.int64)),):
            raise SchemaError("counts length does not match joint domain size")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def d(self) -> int:
        return self.counts.size


@dataclass(frozen=True)
class ProbabilityTable:
    """Probabilities over a joint domain.

    ``sum_defect`` is ``sum(probs) - 1``; it is nonzero only when noisy counts
    were divided by a nominal total (see :func:`to_probability`).
    """

    attrs: tuple[str, ...]
    sizes: tuple[int, ...]
    probs: np.ndarray
    sum_defect: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (int(np.prod(self.sizes, dtype=np.int64)),):
            raise SchemaError("probs length does not match joint domain size")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def has_sum_defect(self) -> bool:
        return abs(self.sum_defect) > 1e-9

    @property
    def d(self) -> int:
        return self.probs.size

    @classmethod
    def uniform(cls, attrs: Sequence[str], sizes: Sequence[int]) -> "ProbabilityTable":
        d = int(np.prod(sizes, dtype=np.int64))
        return cls(tuple(attrs), tuple(sizes), np.full(d, 1.0 / d))


def build_frequency_table(data: Dataset, attrs: Iterable[str]) -> FrequencyTable:
    schema = data.schema
    attrs = schema.ordered(attrs)
    sizes = schema.sizes(attrs)
    if not attrs:
        return FrequencyTable((), (), np.array([float(data.n)]), float(data.n))
    cols = data.values[:, [schema.index(a) for a in attrs]]
    flat = np.ravel_multi_index(cols.T, sizes) if data.n else np.zeros(0, dtype=np.int64)
    counts = np.bincount(flat, minlength=int(np.prod(sizes, dtype=np.int64)))
    return FrequencyTable(attrs, sizes, counts.astype(float), float(data.n))


def marginalize(table, keep: Iterable[str]):
    """Sum a frequency or probability table down to the attributes in ``keep``."""
    keep = set(keep)
    missing = keep - set(table.attrs)
    if missing:
        raise SchemaError(f"cannot keep {sorted(missing)}: not in table attributes")
    kept = tuple(a for a in table.attrs if a in keep)
    drop_axes = tuple(i for i, a in enumerate(table.attrs) if a not in keep)
    sizes = tuple(s for a, s in zip(table.attrs, table.sizes) if a in keep)
    values = table.counts if isinstance(table, FrequencyTable) else table.probs
    arr = values.reshape(table.sizes) if table.attrs else values
    out = arr.sum(axis=drop_axes).reshape(-1) if drop_axes else values.copy()
    if isinstance(table, FrequencyTable):
        return FrequencyTable(kept, sizes, out, table.n_source)
    return ProbabilityTable(kept, sizes, out, table.sum_defect)


def to_probability(table: FrequencyTable, divisor: float | None = None, renormalize: bool = False) -> ProbabilityTable:
    """Divide counts by ``divisor`` (default ``n_source``).

    Args:
        table: Frequency table, possibly noisy.
        divisor: Positive normalizer. Noisy merged tables are divided by the
            nominal record count, so the result may not sum to one.
        renormalize: Clamp negatives and rescale to sum one instead. An all-zero
            table becomes uniform.

    Returns:
        ProbabilityTable with ``sum_defect`` recording any leftover mass error.
    """
    if renormalize:
        c = np.maximum(table.counts, 0.0)
        s = c.sum()
        probs = c / s if s > 0 else np.full(c.size, 1.0 / c.size)
        return ProbabilityTable(table.attrs, table.sizes, probs, 0.0)
    divisor = table.n_source if divisor is None else divisor
    if not divisor > 0:
        raise InvalidParameterError("divisor must be positive")
    probs = table.counts / divisor
    return ProbabilityTable(table.attrs, table.sizes, probs, float(probs.sum() - 1.0))


def smooth_add_one(table: FrequencyTable) -> ProbabilityTable:
    probs = (table.counts + 1.0) / (table.n_source + table.d)
    return ProbabilityTable(table.attrs, table.sizes, probs, float(probs.sum() - 1.0))


def _probs(p) -> np.ndarray:
    return p.probs if isinstance(p, ProbabilityTable) else np.asarray(p, dtype=float)


def entropy(p, base: float = 2.0) -> float:
    """-sum p log p; cells with p <= 0 contribute nothing."""
    v = _probs(p)
    v = v[v > 0]
    return float(-(v * np.log(v)).sum() / math.log(base))


def entropy_bits(p) -> float:
    return entropy(p, 2.0)


def entropy_nats(p) -> float:
    return entropy(p, math.e)


def _check_split(joint: ProbabilityTable, x, y):
    x, y = set(x), set(y)
    if x & y:
        raise SchemaError("x and y must be disjoint")
    if x | y != set(joint.attrs):
        raise SchemaError("x and y must cover the joint's attributes")
    return x, y


def mutual_information(joint: ProbabilityTable, x: Iterable[str], y: Iterable[str], base: float = 2.0) -> float:
    """H(x) + H(y) - H(x, y) from marginals of ``joint``, clamped at 0."""
    x, y = _check_split(joint, x, y)
    hx = entropy(marginalize(joint, x), base)
    hy = entropy(marginalize(joint, y), base)
    return max(0.0, hx + hy - entropy(joint, base))


def mutual_information_direct(joint: ProbabilityTable, x: Iterable[str], y: Iterable[str], base: float = 2.0) -> float:
    """Double-sum form sum p(x,y) log(p(x,y) / (p(x) p(y))); cross-check only."""
    x, y = _check_split(joint, x, y)
    px = marginalize(joint, x)
    py = marginalize(joint, y)
    arr = joint.probs.reshape(joint.sizes)
    # bring x axes first then y axes
    order = [i for i, a in enumerate(joint.attrs) if a in x] + [i for i, a in enumerate(joint.attrs) if a in y]
    mat = np.transpose(arr, order).reshape(px.d, py.d)
    total = 0.0
    for i in range(px.d):
        for j in range(py.d):
            pij = mat[i, j]
            if pij > 0:
                total += pij * math.log(pij / (px.probs[i] * py.probs[j]))
    return max(0.0, total / math.log(base))


def kl_divergence(p, q, base: float = 2.0) -> float:
    """KL(p || q); returns ``math.inf`` when p has mass where q has none."""
    pv, qv = _probs(p), _probs(q)
    if pv.shape != qv.shape:
        raise SchemaError("tables must share a joint domain")
    mask = pv > 0
    if (qv[mask] <= 0).any():
        return math.inf
    return float((pv[mask] * np.log(pv[mask] / qv[mask])).sum() / math.log(base))


def cross_entropy(p, q, base: float = 2.0) -> float:
    """-sum p log q, or ``math.inf`` under a support violation."""
    pv, qv = _probs(p), _probs(q)
    if pv.shape != qv.shape:
        raise SchemaError("tables must share a joint domain")
    mask = pv > 0
    if (qv[mask] <= 0).any():
        return math.inf
    return float(-(pv[mask] * np.log(qv[mask])).sum() / math.log(base))


def empirical_cross_entropy(test: Dataset, model_eval: Callable[[tuple[int, ...]], float]) -> float:
    """Monte Carlo cross entropy in bits, -(1/|test|) sum log2 q(x)."""
    if test.n == 0:
        raise InvalidParameterError("empty test set")
    total = 0.0
    for row in test.rows:
        q = model_eval(row)
        if q <= 0:
            return math.inf
        total -= math.log2(q)
    return total / test.n


def mi_sensitivity(n: int, binary_involved: bool) -> Sensitivity:
    """Sensitivity of empirical mutual information in nats for ``n`` records."""
    if n < 2:
        raise InvalidParameterError("mutual-information sensitivity needs n >= 2")
    if binary_involved:
        val = math.log(n) / n + (n - 1) / n * math.log(n / (n - 1))
    else:
        val = 2.0 / n * math.log((n + 1) / 2) + (n - 1) / n * math.log((n + 1) / (n - 1))
    return Sensitivity(val)


# --- text ingestion -------------------------------------------------------


def read_schema_sidecar(path) -> dict[str, tuple[str, ...]]:
    """Parse ``attribute=v1,v2,...`` lines; blank lines and ``#`` comments skipped."""
    out: dict[str, tuple[str, ...]] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SchemaError(f"bad sidecar line: {raw!r}")
        name, vals = line.split("=", 1)
        out[name.strip()] = tuple(v.strip() for v in vals.split(","))
    return out


def write_schema_sidecar(schema: AttributeSchema, path) -> None:
    Path(path).write_text("".join(f"{n}={','.join(d)}\n" for n, d in schema.attributes))


def read_dataset(path, schema_path=None, delimiter: str = ",") -> Dataset:
    """Load a delimited file with a header row of attribute names.

    Domains are the sorted observed labels unless a sidecar fixes them.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = [h.strip() for h in next(reader)]
        raw = [[c.strip() for c in r] for r in reader if r]
    for r in raw:
        if len(r) != len(header):
            raise SchemaError("ragged row in data file")
    if schema_path is not None:
        side = read_schema_sidecar(schema_path)
        missing = [h for h in header if h not in side]
        if missing:
            raise SchemaError(f"sidecar lacks attributes {missing}")
        schema = AttributeSchema(tuple((h, side[h]) for h in header))
    else:
        schema = AttributeSchema(
            tuple((h, tuple(sorted({r[i] for r in raw}))) for i, h in enumerate(header))
        )
    lookup = [{v: k for k, v in enumerate(d)} for _, d in schema.attributes]
    try:
        rows = [[lookup[i][c] for i, c in enumerate(r)] for r in raw]
    except KeyError as exc:
        raise SchemaError(f"label {exc} not in declared domain") from None
    return Dataset.from_rows(schema, rows)


def write_dataset(data: Dataset, path, delimiter: str = ",") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(data.schema.names)
        doms = [d for _, d in data.schema.attributes]
        for row in data.values:
            w.writerow([doms[i][v] for i, v in enumerate(row)])
