"""Bayesian networks and the centralized greedy (PrivBayes-style) learners."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .discrete_prob import (
    AttributeSchema,
    Dataset,
    FrequencyTable,
    ProbabilityTable,
    SchemaError,
    build_frequency_table,
    mi_sensitivity,
    mutual_information,
    to_probability,
)
from .dp_core import (
    InvalidParameterError,
    PrivacyBudget,
    RandomSource,
    Sensitivity,
    as_budget,
    exponential_select,
    sample_laplace,
)


class InvalidStructureError(ValueError):
    """Cyclic graph, unknown attribute or degree violation."""


Candidate = tuple[str, tuple[str, ...]]


@dataclass(frozen=True)
class BNStructure:
    nodes: tuple[str, ...]
    parent_sets: Mapping[str, tuple[str, ...]]
    insertion_order: tuple[str, ...]

    def __post_init__(self):
        ps = {n: tuple(self.parent_sets.get(n, ())) for n in self.nodes}
        for n, pa in ps.items():
            for p in pa:
                if p not in ps:
                    raise InvalidStructureError(f"parent {p!r} of {n!r} is not a node")
                if p == n:
                    raise InvalidStructureError(f"self loop on {n!r}")
        if sorted(self.insertion_order) != sorted(self.nodes):
            raise InvalidStructureError("insertion order must list every node once")
        object.__setattr__(self, "parent_sets", ps)
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "insertion_order", tuple(self.insertion_order))

    @property
    def degree(self) -> int:
        return max((len(p) for p in self.parent_sets.values()), default=0)

    def edges(self) -> set[tuple[str, str]]:
        return {(p, c) for c, pa in self.parent_sets.items() for p in pa}

    def skeleton(self) -> set[frozenset]:
        return {frozenset(e) for e in self.edges()}

    def __eq__(self, other):
        if not isinstance(other, BNStructure):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and dict(self.parent_sets) == dict(other.parent_sets)
            and self.insertion_order == other.insertion_order
        )

    def __hash__(self):
        return hash((self.nodes, tuple(sorted(self.parent_sets.items())), self.insertion_order))


def topological_order(structure: BNStructure) -> list[str]:
    """Kahn's algorithm, preferring insertion order among ready nodes."""
    remaining = {n: set(structure.parent_sets[n]) for n in structure.nodes}
    order: list[str] = []
    while remaining:
        ready = [n for n in structure.insertion_order if n in remaining and not remaining[n]]
        if not ready:
            raise InvalidStructureError("structure contains a cycle")
        n = ready[0]
        order.append(n)
        del remaining[n]
        for pa in remaining.values():
            pa.discard(n)
    return order


@dataclass(frozen=True)
class ConditionalTables:
    """theta[X] has shape (prod of parent domain sizes, |dom X|).

    Rows follow the lexicographic order of parent realizations, parents taken in
    the order stored in the structure.
    """

    theta: Mapping[str, np.ndarray]

    def check(self, tol: float = 1e-9) -> None:
        for name, t in self.theta.items():
            if (t < -tol).any() or not np.allclose(t.sum(axis=1), 1.0, atol=tol, rtol=0):
                raise InvalidStructureError(f"conditional slices of {name!r} do not sum to one")


@dataclass(frozen=True)
class BayesNet:
    schema: AttributeSchema
    structure: BNStructure
    parameters: ConditionalTables

    def __post_init__(self):
        for n in self.structure.nodes:
            pa = self.structure.parent_sets[n]
            rows = int(np.prod(self.schema.sizes(pa), dtype=np.int64)) if pa else 1
            t = self.parameters.theta.get(n)
            if t is None or t.shape != (rows, self.schema.size(n)):
                raise InvalidStructureError(f"parameter shape mismatch for {n!r}")

    def _parent_index(self, name: str, values: np.ndarray) -> np.ndarray:
        """Row index into theta[name] for each row of ``values`` (n, N)."""
        pa = self.structure.parent_sets[name]
        if not pa:
            return np.zeros(values.shape[0], dtype=np.int64)
        cols = values[:, [self.schema.index(p) for p in pa]]
        return np.ravel_multi_index(cols.T, self.schema.sizes(pa))

    def joint_probability(self, x: Sequence[int]) -> float:
        row = np.asarray(x, dtype=np.int64).reshape(1, -1)
        prob = 1.0
        for n in self.structure.nodes:
            r = self._parent_index(n, row)[0]
            prob *= float(self.parameters.theta[n][r, row[0, self.schema.index(n)]])
        return prob

    def log2_probabilities(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.int64)
        out = np.zeros(values.shape[0])
        with np.errstate(divide="ignore"):
            for n in self.structure.nodes:
                t = self.parameters.theta[n]
                out += np.log2(t[self._parent_index(n, values), values[:, self.schema.index(n)]])
        return out

    def joint_table(self) -> ProbabilityTable:
        """Full joint distribution over the schema's attributes."""
        names = self.schema.names
        sizes = self.schema.sizes(names)
        grid = np.array(np.unravel_index(np.arange(int(np.prod(sizes))), sizes)).T
        probs = np.ones(grid.shape[0])
        for n in self.structure.nodes:
            probs *= self.parameters.theta[n][self._parent_index(n, grid), grid[:, self.schema.index(n)]]
        return ProbabilityTable(names, sizes, probs, float(probs.sum() - 1.0))

    def marginal(self, name: str) -> np.ndarray:
        from .discrete_prob import marginalize

        return marginalize(self.joint_table(), [name]).probs


def prior_sample(net: BayesNet, count: int, rng: RandomSource) -> Dataset:
    """Ancestral sampling in topological order, one uniform per cell."""
    schema = net.schema
    values = np.zeros((count, len(schema.names)), dtype=np.int64)
    if count == 0:
        return Dataset(schema, values)
    for n in topological_order(net.structure):
        t = net.parameters.theta[n]
        cdf = np.cumsum(t, axis=1)
        cdf[:, -1] = 1.0
        rows = cdf[net._parent_index(n, values)]
        u = rng.uniform(count)
        values[:, schema.index(n)] = np.minimum((u[:, None] >= rows).sum(axis=1), t.shape[1] - 1)
    return Dataset(schema, values)


# --- structure search -------------------------------------------------------


def enumerate_candidates(schema: AttributeSchema, visited: Sequence[str], k: int) -> list[Candidate]:
    """All (X, Pa) with X unvisited, Pa a subset of ``visited`` and |Pa| <= k.

    Children follow schema order; for each child, parent sets go by size then
    lexicographically in schema order, starting with the empty set.
    """
    vis = schema.ordered(visited)
    out: list[Candidate] = []
    for x in schema.names:
        if x in vis:
            continue
        for size in range(0, min(k, len(vis)) + 1):
            for pa in combinations(vis, size):
                out.append((x, pa))
    return out


def is_binary_pair(schema: AttributeSchema, child: str, parents: Sequence[str]) -> bool:
    """True when the child or the joint parent variable has exactly two values."""
    return schema.size(child) == 2 or (len(parents) > 0 and schema.joint_size(parents) == 2)


def round_sensitivity(schema: AttributeSchema, candidates: Sequence[Candidate], n: int) -> Sensitivity:
    """Largest mutual-information sensitivity among the scored candidates."""
    vals = [mi_sensitivity(n, is_binary_pair(schema, x, pa)).delta for x, pa in candidates if pa]
    if not vals:  # only empty parent sets: scores are all zero, any delta works
        vals = [mi_sensitivity(n, False).delta]
    return Sensitivity(max(vals))


def greedy_search(
    schema: AttributeSchema,
    k: int,
    score: Callable[[str, tuple[str, ...]], float],
    select: Callable[[int, list[Candidate], np.ndarray], int] | None = None,
    first: str | None = None,
) -> BNStructure:
    """Generic greedy builder.

    Args:
        schema: Attributes to connect.
        k: Maximum parent-set size.
        score: Candidate scorer, typically mutual information in nats.
        select: Picks an index given (round, candidates, scores). Defaults to
            argmax with the first maximum winning.
        first: Root attribute; defaults to the schema-first attribute.

    Returns:
        BNStructure whose insertion order records the greedy order.
    """
    names = schema.names
    if k < 1:
        raise InvalidParameterError("degree k must be at least 1")
    if len(names) > 1 and k >= len(names):
        raise InvalidParameterError("degree k must be smaller than the number of attributes")
    first = names[0] if first is None else first
    visited = [first]
    parents: dict[str, tuple[str, ...]] = {first: ()}
    for rnd in range(len(names) - 1):
        cands = enumerate_candidates(schema, visited, k)
        scores = np.array([score(x, pa) for x, pa in cands])
        idx = int(np.argmax(scores)) if select is None else int(select(rnd, cands, scores))
        x, pa = cands[idx]
        parents[x] = pa
        visited.append(x)
    return BNStructure(names, parents, tuple(visited))


def mi_score_from_tables(lookup: Callable[[tuple[str, ...]], ProbabilityTable]):
    """Score function computing I(X; Pa) in nats from joint tables."""

    def score(x: str, pa: tuple[str, ...]) -> float:
        if not pa:
            return 0.0
        joint = lookup((x,) + pa)
        return mutual_information(joint, [x], pa, base=math.e)

    return score


def empirical_mi_score(data: Dataset):
    cache: dict[frozenset, ProbabilityTable] = {}

    def lookup(attrs):
        key = frozenset(attrs)
        if key not in cache:
            cache[key] = to_probability(build_frequency_table(data, attrs))
        return cache[key]

    return mi_score_from_tables(lookup)


def greedy_structure_learn(
    data: Dataset,
    k: int,
    eps1: PrivacyBudget | float | None = None,
    rng: RandomSource | None = None,
) -> BNStructure:
    """Greedy structure learning; exponential mechanism when ``eps1`` is given.

    Each of the N-1 rounds spends ``eps1/(N-1)``. Without ``eps1`` the round
    winner is the plain argmax, which for k=1 is the Chow-Liu tree.
    """
    if data.n == 0:
        raise InvalidParameterError("cannot learn from an empty dataset")
    schema = data.schema
    score = empirical_mi_score(data)
    select = None
    if eps1 is not None:
        if rng is None:
            raise InvalidParameterError("private learning needs a RandomSource")
        eps1 = as_budget(eps1)
        per_round = eps1.epsilon / max(len(schema.names) - 1, 1)
        n = max(data.n, 2)

        def select(rnd, cands, scores):
            return exponential_select(scores, round_sensitivity(schema, cands, n), per_round, rng)

    return greedy_search(schema, k, score, select)


def chow_liu_tree(data: Dataset) -> set[frozenset]:
    """Undirected maximum-weight spanning tree on pairwise MI (Prim's algorithm)."""
    schema = data.schema
    names = list(schema.names)
    score = empirical_mi_score(data)
    in_tree = {names[0]}
    edges: set[frozenset] = set()
    while len(in_tree) < len(names):
        best = None
        for u in names:
            if u not in in_tree:
                continue
            for v in names:
                if v in in_tree:
                    continue
                w = score(v, tuple(schema.ordered([u])))
                if best is None or w > best[0]:
                    best = (w, u, v)
        edges.add(frozenset(best[1:]))
        in_tree.add(best[2])
    return edges


# --- parameters -------------------------------------------------------------


def family_attrs(structure: BNStructure, child: str) -> tuple[str, ...]:
    return (child,) + tuple(structure.parent_sets[child])


def conditional_from_joint(
    schema: AttributeSchema, table, child: str, parents: Sequence[str]
) -> np.ndarray:
    """Turn a nonnegative table over {child} U parents into a CPT.

    Works on either counts or probabilities. Parent realizations with zero mass
    get a uniform conditional.
    """
    vals = table.counts if isinstance(table, FrequencyTable) else table.probs
    vals = np.maximum(np.asarray(vals, dtype=float), 0.0)
    arr = vals.reshape(table.sizes) if table.attrs else vals
    order = [table.attrs.index(p) for p in parents] + [table.attrs.index(child)]
    rows = int(np.prod(schema.sizes(parents), dtype=np.int64)) if parents else 1
    mat = np.transpose(arr, order).reshape(rows, schema.size(child))
    sums = mat.sum(axis=1, keepdims=True)
    uniform = np.full_like(mat, 1.0 / mat.shape[1])
    with np.errstate(invalid="ignore", divide="ignore"):
        cpt = np.where(sums > 0, mat / np.where(sums > 0, sums, 1.0), uniform)
    return cpt


def smoothed_counts(table: FrequencyTable) -> FrequencyTable:
    """Add one to every cell; dividing by n + d then gives add-one smoothing."""
    return FrequencyTable(table.attrs, table.sizes, table.counts + 1.0, table.n_source + table.d)


def learn_parameters_central(
    data: Dataset,
    structure: BNStructure,
    eps2: PrivacyBudget | float | None = None,
    rng: RandomSource | None = None,
    smooth: bool = False,
) -> ConditionalTables:
    """MLE (optionally noisy) conditional tables for every attribute.

    Args:
        data: Training data.
        structure: Structure over ``data.schema``.
        eps2: Optional budget. Each family's joint probability gets
            Laplace(0, 2N/(n*eps2)) noise per cell, is clamped at zero and
            renormalized before conditioning.
        rng: Required when ``eps2`` is given.
        smooth: Apply add-one smoothing on the count scale before conditioning.
    """
    schema = data.schema
    n = max(data.n, 1)
    big_n = len(schema.names)
    theta = {}
    for x in structure.nodes:
        fam = family_attrs(structure, x)
        tab = build_frequency_table(data, fam)
        probs = tab.counts / n
        if eps2 is not None:
            eps2 = as_budget(eps2)
            if rng is None:
                raise InvalidParameterError("private parameter learning needs a RandomSource")
            if not math.isinf(eps2.epsilon):
                probs = probs + sample_laplace(0.0, 2.0 * big_n / (n * eps2.epsilon), rng, probs.shape)
            probs = np.maximum(probs, 0.0)
            s = probs.sum()
            probs = probs / s if s > 0 else np.full(probs.size, 1.0 / probs.size)
        counts = FrequencyTable(tab.attrs, tab.sizes, probs * n, float(n))
        if smooth:
            counts = smoothed_counts(counts)
        theta[x] = conditional_from_joint(schema, counts, x, structure.parent_sets[x])
    return ConditionalTables(theta)


def independent_structure(schema: AttributeSchema) -> BNStructure:
    return BNStructure(schema.names, {n: () for n in schema.names}, schema.names)


def privbayes(data: Dataset, k: int, eps: PrivacyBudget | float, rng: RandomSource, smooth: bool = False) -> BayesNet:
    """Local PrivBayes run with the default even split between the two phases."""
    half = as_budget(eps).epsilon / 2.0
    structure = greedy_structure_learn(data, k, half, rng)
    params = learn_parameters_central(data, structure, half, rng, smooth=smooth)
    return BayesNet(data.schema, structure, params)


# --- serialization ----------------------------------------------------------


def model_to_dict(net: BayesNet) -> dict:
    return {
        "schema": [{"name": n, "domain": list(d)} for n, d in net.schema.attributes],
        "parents": {n: list(net.structure.parent_sets[n]) for n in net.structure.nodes},
        "insertion_order": list(net.structure.insertion_order),
        "cpt": {n: [float(v) for v in net.parameters.theta[n].ravel()] for n in net.structure.nodes},
    }


def model_from_dict(doc: dict) -> BayesNet:
    try:
        schema = AttributeSchema(tuple((a["name"], tuple(a["domain"])) for a in doc["schema"]))
        parents = {n: tuple(p) for n, p in doc["parents"].items()}
        structure = BNStructure(schema.names, parents, tuple(doc["insertion_order"]))
        theta = {}
        for n in schema.names:
            pa = parents.get(n, ())
            rows = int(np.prod(schema.sizes(pa), dtype=np.int64)) if pa else 1
            theta[n] = np.array(doc["cpt"][n], dtype=float).reshape(rows, schema.size(n))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed model document: {exc}") from None
    return BayesNet(schema, structure, ConditionalTables(theta))


def dumps_model(net: BayesNet) -> str:
    return json.dumps(model_to_dict(net), sort_keys=True, separators=(",", ":"))


def loads_model(text: str) -> BayesNet:
    return model_from_dict(json.loads(text))


def save_model(net: BayesNet, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(net), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> BayesNet:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
