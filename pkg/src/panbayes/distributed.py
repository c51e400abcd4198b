"""Analyst/holder protocols for learning a Bayesian network from horizontally
partitioned data.

Holders answer queries over their private rows with differentially private
replies and keep a per-run budget ledger. The analyst talks to them through a
transport (in-process or TCP) that serializes every message as one JSON object
per line and records the transcript.
"""

from __future__ import annotations

import json
import math
import socket
import socketserver
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Sequence

import numpy as np

from .bayes_net import (
    BayesNet,
    BNStructure,
    ConditionalTables,
    Candidate,
    conditional_from_joint,
    empirical_mi_score,
    enumerate_candidates,
    family_attrs,
    greedy_search,
    greedy_structure_learn,
    learn_parameters_central,
    mi_score_from_tables,
    model_from_dict,
    model_to_dict,
    prior_sample,
    round_sensitivity,
)
from .discrete_prob import (
    AttributeSchema,
    Dataset,
    FrequencyTable,
    SchemaError,
    build_frequency_table,
    marginalize,
    to_probability,
)
from .dp_core import (
    BudgetLedger,
    InvalidParameterError,
    PrivacyBudget,
    RandomSource,
    Sensitivity,
    as_budget,
    exponential_select,
    perturb_counts,
)

COUNT_SENSITIVITY = Sensitivity(2.0)  # bounded adjacency: one changed row moves two cells

QUERY_KINDS = ("freq_query", "vote_query", "model_query")
REPLY_KINDS = ("freq_reply", "vote_reply", "model_reply", "refusal")
MESSAGE_FIELDS = ("kind", "run_id", "round", "attrs", "epsilon", "k", "counts", "pair", "model", "n_j")
MODEL_KEYS = {"schema", "parents", "insertion_order", "cpt"}


class ProtocolError(RuntimeError):
    """Malformed message, schema mismatch or a refused query."""


class ProtocolAbort(ProtocolError):
    def __init__(self, message: str, partial: dict | None = None):
        super().__init__(message)
        self.partial = partial or {}


# --- wire format -------------------------------------------------------------


@dataclass(frozen=True)
class ProtocolMessage:
    kind: str
    run_id: str = ""
    round: int = 0
    attrs: tuple[str, ...] | None = None
    epsilon: float | None = None
    k: int | None = None
    counts: tuple[float, ...] | None = None
    pair: dict | None = None
    model: dict | None = None
    n_j: int | None = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        for name in MESSAGE_FIELDS:
            v = getattr(self, name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = list(v)
            out[name] = v
        return out


def validate_message(doc: dict) -> None:
    """Reject unknown kinds, unknown fields and anything shaped like raw rows."""
    kind = doc.get("kind")
    if kind not in QUERY_KINDS + REPLY_KINDS:
        raise ProtocolError(f"unknown message kind {kind!r}")
    extra = set(doc) - set(MESSAGE_FIELDS)
    if extra:
        raise ProtocolError(f"unexpected fields {sorted(extra)}")
    if "counts" in doc and kind != "freq_reply":
        raise ProtocolError("counts only travel in freq_reply")
    if "model" in doc:
        if kind != "model_reply" or set(doc["model"]) != MODEL_KEYS:
            raise ProtocolError("model payload must be a serialized network")
    for v in doc.get("counts", []):
        if not isinstance(v, (int, float)):
            raise ProtocolError("counts must be a flat numeric vector")


def encode(msg: ProtocolMessage) -> str:
    doc = msg.to_dict()
    validate_message(doc)
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def decode(line: str) -> ProtocolMessage:
    doc = json.loads(line)
    validate_message(doc)
    for key in ("attrs", "counts"):
        if key in doc:
            doc[key] = tuple(doc[key])
    return ProtocolMessage(**doc)


# --- holders -----------------------------------------------------------------


def partition_round_robin(data: Dataset, m_holders: int) -> list[Dataset]:
    """Row i goes to holder i mod M."""
    if m_holders < 1:
        raise InvalidParameterError("need at least one holder")
    idx = np.arange(data.n)
    return [data.take(idx[idx % m_holders == j]) for j in range(m_holders)]


@dataclass
class HolderEndpoint:
    """A data holder answering protocol queries under a budget ledger.

    ``noise=False`` is a test hook: replies become exact (or argmax) while the
    ledger still records the nominal spend.
    """

    id: int
    data: Dataset
    rng: RandomSource
    budget: float = math.inf
    noise: bool = True
    ledger: BudgetLedger = field(init=False)

    def __post_init__(self):
        self.ledger = BudgetLedger(total=self.budget, tolerance=1e-9)
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return self.data.n

    def reset(self, budget: float) -> None:
        self.budget = budget
        self.ledger = BudgetLedger(total=budget, tolerance=1e-9)

    def handle(self, msg: ProtocolMessage) -> ProtocolMessage:
        with self._lock:
            if msg.kind not in QUERY_KINDS:
                raise ProtocolError(f"holder cannot answer {msg.kind!r}")
            eps = float(msg.epsilon) if msg.epsilon is not None else 0.0
            if not eps > 0:
                raise ProtocolError("query must carry a positive epsilon")
            if not self.ledger.can_spend(eps):
                return ProtocolMessage("refusal", msg.run_id, msg.round)
            try:
                reply = getattr(self, "_" + msg.kind)(msg, eps)
            except SchemaError as exc:
                raise ProtocolError(str(exc)) from None
            self.ledger.debit(msg.kind, eps)
            return reply

    def _freq_query(self, msg, eps):
        counts = build_frequency_table(self.data, msg.attrs).counts
        if self.noise:
            counts = perturb_counts(counts, COUNT_SENSITIVITY, PrivacyBudget(eps), True, self.rng)
        return ProtocolMessage(
            "freq_reply", msg.run_id, msg.round, attrs=tuple(self.data.schema.ordered(msg.attrs)),
            counts=tuple(float(c) for c in counts),
        )

    def _vote_query(self, msg, eps):
        schema = self.data.schema
        cands = enumerate_candidates(schema, msg.attrs, int(msg.k))
        score = empirical_mi_score(self.data) if self.n else (lambda x, pa: 0.0)
        scores = np.array([score(x, pa) for x, pa in cands])
        if self.noise:
            sens = round_sensitivity(schema, cands, max(self.n, 2))
            idx = exponential_select(scores, sens, eps, self.rng)
        else:
            idx = int(np.argmax(scores))
        x, pa = cands[idx]
        return ProtocolMessage(
            "vote_reply", msg.run_id, msg.round, pair={"child": x, "parents": list(pa)}
        )

    def _model_query(self, msg, eps):
        if self.n == 0:
            return ProtocolMessage("model_reply", msg.run_id, msg.round, n_j=0)
        k = int(msg.k)
        if self.noise:
            structure = greedy_structure_learn(self.data, k, eps / 2, self.rng)
            params = learn_parameters_central(self.data, structure, eps / 2, self.rng)
        else:
            structure = greedy_structure_learn(self.data, k)
            params = learn_parameters_central(self.data, structure)
        net = BayesNet(self.data.schema, structure, params)
        return ProtocolMessage(
            "model_reply", msg.run_id, msg.round, model=model_to_dict(net), n_j=self.n
        )


def make_holders(
    parts: Sequence[Dataset], seed: int, budget: float = math.inf, noise: bool = True
) -> list[HolderEndpoint]:
    root = RandomSource(seed)
    return [HolderEndpoint(j, d, root.child(j), budget, noise) for j, d in enumerate(parts)]


# --- transports ----------------------------------------------------------------


class Transport:
    """Delivers queries to holders and keeps the encoded transcript.

    ``broadcast`` sends one query per holder concurrently and joins the replies;
    the transcript lists queries then replies in holder order, so it does not
    depend on thread scheduling.
    """

    def __init__(self, n_holders: int):
        self.n_holders = n_holders
        self.transcript: list[str] = []
        self._pool = ThreadPoolExecutor(max_workers=max(n_holders, 1))

    def _exchange(self, j: int, line: str) -> str:
        raise NotImplementedError

    def broadcast(self, msgs: Sequence[ProtocolMessage]) -> list[ProtocolMessage]:
        if len(msgs) != self.n_holders:
            raise ProtocolError("one query per holder expected")
        lines = [encode(m) for m in msgs]
        replies = list(self._pool.map(self._exchange, range(self.n_holders), lines))
        for j, line in enumerate(lines):
            self.transcript.append(f"> {j} {line}")
        for j, line in enumerate(replies):
            self.transcript.append(f"< {j} {line}")
        return [decode(r) for r in replies]

    def send_all(self, msg: ProtocolMessage) -> list[ProtocolMessage]:
        return self.broadcast([msg] * self.n_holders)

    def transcript_text(self) -> str:
        return "".join(line + "\n" for line in self.transcript)

    def close(self) -> None:
        self._pool.shutdown(wait=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class InProcessTransport(Transport):
    """Calls holders directly but still round-trips every message through the codec."""

    def __init__(self, holders: Sequence[HolderEndpoint]):
        super().__init__(len(holders))
        self.holders = list(holders)

    def _exchange(self, j, line):
        return encode(self.holders[j].handle(decode(line)))


class _HolderHandler(socketserver.StreamRequestHandler):
    def handle(self):
        holder: HolderEndpoint = self.server.holder  # type: ignore[attr-defined]
        for raw in self.rfile:
            line = raw.decode("utf-8").strip()
            if not line:
                continue
            reply = encode(holder.handle(decode(line)))
            self.wfile.write((reply + "\n").encode("utf-8"))
            self.wfile.flush()


class _HolderServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class SocketTransport(Transport):
    """Each holder listens on a localhost TCP port; one persistent connection each."""

    def __init__(self, holders: Sequence[HolderEndpoint], host: str = "127.0.0.1"):
        super().__init__(len(holders))
        self.holders = list(holders)
        self._servers = []
        self._conns = []
        for h in self.holders:
            srv = _HolderServer((host, 0), _HolderHandler)
            srv.holder = h  # type: ignore[attr-defined]
            # short poll so close() does not wait half a second per holder
            threading.Thread(target=srv.serve_forever, kwargs={"poll_interval": 0.01}, daemon=True).start()
            self._servers.append(srv)
            sock = socket.create_connection(srv.server_address)
            self._conns.append((sock, sock.makefile("rwb")))

    def _exchange(self, j, line):
        _, fh = self._conns[j]
        fh.write((line + "\n").encode("utf-8"))
        fh.flush()
        reply = fh.readline()
        if not reply:
            raise ProtocolError(f"holder {j} closed the connection")
        return reply.decode("utf-8").strip()

    def close(self):
        for sock, fh in self._conns:
            fh.close()
            sock.close()
        for srv in self._servers:
            srv.shutdown()
            srv.server_close()
        super().close()


def make_transport(kind: str, holders: Sequence[HolderEndpoint]) -> Transport:
    if kind == "inprocess":
        return InProcessTransport(holders)
    if kind == "socket":
        return SocketTransport(holders)
    raise InvalidParameterError(f"unknown transport {kind!r}")


# --- analyst side --------------------------------------------------------------


def _check_replies(replies, expected: str, partial=None):
    for j, r in enumerate(replies):
        if r.kind == "refusal":
            raise ProtocolAbort(f"holder {j} refused the query", partial)
        if r.kind != expected:
            raise ProtocolError(f"holder {j} sent {r.kind!r}, expected {expected!r}")


def query_merged_table(
    transport: Transport, schema: AttributeSchema, attrs: Sequence[str], eps_q: float,
    n_total: float, run_id: str = "", rnd: int = 0,
) -> FrequencyTable:
    """Ask every holder for a noisy table over ``attrs`` and sum the replies."""
    attrs = schema.ordered(attrs)
    q = ProtocolMessage("freq_query", run_id, rnd, attrs=attrs, epsilon=eps_q)
    replies = transport.send_all(q)
    _check_replies(replies, "freq_reply")
    sizes = schema.sizes(attrs)
    total = np.zeros(int(np.prod(sizes, dtype=np.int64)))
    for r in replies:
        if tuple(r.attrs) != attrs or len(r.counts) != total.size:
            raise ProtocolError("reply does not match the queried attributes")
        total += np.asarray(r.counts, dtype=float)
    return FrequencyTable(attrs, sizes, total, float(n_total))


@dataclass
class TableCache:
    """Merged (k+1)-dimensional tables, looked up by any subset of their attributes."""

    tables: dict[tuple[str, ...], FrequencyTable] = field(default_factory=dict)

    def find(self, attrs: Sequence[str]) -> FrequencyTable | None:
        """Marginal of the first cached table (in fetch order) containing ``attrs``."""
        want = set(attrs)
        for key, tab in self.tables.items():
            if want <= set(key):
                return marginalize(tab, want)
        return None


def n_noisy_tables(n_attrs: int, k: int) -> int:
    return math.comb(n_attrs, k + 1)


def learn_structure_noisy_ss(
    transport: Transport, schema: AttributeSchema, k: int, eps: PrivacyBudget | float,
    n_total: int, run_id: str = "noisy-ss",
) -> tuple[BNStructure, TableCache]:
    """Fetch every (k+1)-attribute table once, merge, then run greedy argmax.

    Each of the C(N, k+1) tables costs eps / C(N, k+1), so the Laplace scale per
    cell is 2 C(N, k+1) / eps.
    """
    names = schema.names
    if k < 1 or k >= len(names):
        raise InvalidParameterError("degree k must satisfy 1 <= k < N")
    eps = as_budget(eps).epsilon
    subsets = list(combinations(names, k + 1))
    eps_q = eps / len(subsets)
    cache = TableCache()
    for rnd, attrs in enumerate(subsets):
        cache.tables[attrs] = query_merged_table(transport, schema, attrs, eps_q, n_total, run_id, rnd)

    def lookup(attrs):
        return to_probability(cache.find(attrs), divisor=float(n_total))

    structure = greedy_search(schema, k, mi_score_from_tables(lookup))
    return structure, cache


def learn_parameters_distributed(
    transport: Transport, schema: AttributeSchema, structure: BNStructure, n_total: int,
    eps2: PrivacyBudget | float | None = None, cache: TableCache | None = None,
    smooth: bool = False, run_id: str = "params",
) -> ConditionalTables:
    """Conditional tables from merged noisy counts.

    Families found in ``cache`` are marginalized for free. Otherwise each holder
    answers one query per attribute at eps2/N.
    """
    names = structure.nodes
    theta = {}
    for rnd, x in enumerate(names):
        fam = family_attrs(structure, x)
        tab = cache.find(fam) if cache is not None else None
        if tab is None:
            if eps2 is None:
                raise ProtocolError(f"family of {x!r} not cached and no eps2 given")
            per_query = as_budget(eps2).epsilon / len(names)
            tab = query_merged_table(transport, schema, fam, per_query, n_total, run_id, rnd)
        tab = FrequencyTable(tab.attrs, tab.sizes, np.maximum(tab.counts, 0.0), float(n_total))
        if smooth:
            tab = FrequencyTable(tab.attrs, tab.sizes, tab.counts + 1.0, tab.n_source + tab.d)
        # dividing by the nominal n does not change the conditionals
        theta[x] = conditional_from_joint(schema, to_probability(tab, tab.n_source), x, structure.parent_sets[x])
    return ConditionalTables(theta)


def tally_votes(cands: Sequence[Candidate], votes: Sequence[Candidate]) -> int:
    """Most-voted candidate index; ties go to the lowest index."""
    index = {c: i for i, c in enumerate(cands)}
    tally = np.zeros(len(cands), dtype=np.int64)
    for v in votes:
        if v not in index:
            raise ProtocolError(f"vote for unknown candidate {v}")
        tally[index[v]] += 1
    return int(np.argmax(tally))


def learn_structure_majority_vote(
    transport: Transport, schema: AttributeSchema, k: int, eps1: PrivacyBudget | float,
    run_id: str = "majority-vote",
) -> BNStructure:
    names = schema.names
    if k < 1 or k >= len(names):
        raise InvalidParameterError("degree k must satisfy 1 <= k < N")
    per_round = as_budget(eps1).epsilon / (len(names) - 1)
    visited = [names[0]]
    parents: dict[str, tuple[str, ...]] = {names[0]: ()}
    for rnd in range(len(names) - 1):
        cands = enumerate_candidates(schema, visited, k)
        q = ProtocolMessage("vote_query", run_id, rnd, attrs=schema.ordered(visited), epsilon=per_round, k=k)
        replies = transport.send_all(q)
        _check_replies(replies, "vote_reply", dict(parents))
        votes = [(r.pair["child"], tuple(r.pair["parents"])) for r in replies]
        x, pa = cands[tally_votes(cands, votes)]
        parents[x] = pa
        visited.append(x)
    return BNStructure(names, parents, tuple(visited))


def learn_structure_share_model(
    transport: Transport, schema: AttributeSchema, k: int, eps: PrivacyBudget | float,
    rng: RandomSource, run_id: str = "share-model",
) -> tuple[BNStructure, Dataset, list[BayesNet | None]]:
    """Collect local private models, prior-sample n_j rows from each, relearn.

    The analyst's greedy pass runs without privacy: it only post-processes the
    holders' outputs.
    """
    eps = as_budget(eps).epsilon
    q = ProtocolMessage("model_query", run_id, 0, epsilon=eps, k=k)
    replies = transport.send_all(q)
    _check_replies(replies, "model_reply")
    models: list[BayesNet | None] = []
    parts = []
    for j, r in enumerate(replies):
        if not r.n_j:
            models.append(None)
            continue
        net = model_from_dict(r.model)
        if net.schema != schema:
            raise ProtocolError(f"holder {j} model schema mismatch")
        models.append(net)
        parts.append(prior_sample(net, int(r.n_j), rng.child(j)))
    if not parts:
        raise ProtocolError("no holder contributed a model")
    pool = Dataset.concat(parts)
    structure = greedy_structure_learn(pool, k)
    return structure, pool, models


# --- end-to-end runs -----------------------------------------------------------

STRATEGIES = ("noisy-ss", "majority-vote", "share-model")


@dataclass
class StrategyResult:
    strategy: str
    model: BayesNet
    transcript: str
    spend: list[float]
    extra: dict = field(default_factory=dict)


def run_strategy(
    strategy: str,
    parts: Sequence[Dataset],
    k: int,
    eps: float,
    seed: int,
    transport: str = "inprocess",
    noise: bool = True,
    smooth: bool = False,
    eps1: float | None = None,
    eps2: float | None = None,
) -> StrategyResult:
    """Run one protocol end to end and return the global model and transcript.

    Args:
        strategy: ``noisy-ss``, ``majority-vote`` or ``share-model``.
        parts: One dataset per holder, all on the same schema.
        k: Network degree.
        eps: Per-holder total budget.
        seed: Master seed; holder and analyst streams derive from it.
        transport: ``inprocess`` or ``socket``.
        noise: False disables all holder-side noise (exactness checks).
        smooth: Add-one smoothing of the final parameters.
        eps1, eps2: Majority-vote phase split, default eps/2 each.
    """
    if strategy not in STRATEGIES:
        raise InvalidParameterError(f"unknown strategy {strategy!r}")
    schema = parts[0].schema
    if any(p.schema != schema for p in parts):
        raise ProtocolError("holders disagree on the schema")
    n_total = sum(p.n for p in parts)
    root = RandomSource(seed)
    if strategy == "majority-vote":
        eps1 = eps / 2 if eps1 is None else eps1
        eps2 = eps / 2 if eps2 is None else eps2
        budget = eps1 + eps2
    else:
        budget = eps
    holders = make_holders(parts, root.child(0).gen.integers(2**63), budget, noise)
    extra: dict = {}
    with make_transport(transport, holders) as tr:
        if strategy == "noisy-ss":
            structure, cache = learn_structure_noisy_ss(tr, schema, k, eps, n_total)
            params = learn_parameters_distributed(tr, schema, structure, n_total, cache=cache, smooth=smooth)
            extra["cache"] = cache
        elif strategy == "majority-vote":
            structure = learn_structure_majority_vote(tr, schema, k, eps1)
            params = learn_parameters_distributed(tr, schema, structure, n_total, eps2=eps2, smooth=smooth)
        else:
            structure, pool, models = learn_structure_share_model(tr, schema, k, eps, root.child(1))
            params = learn_parameters_central(pool, structure, smooth=smooth)
            extra.update(pool=pool, models=models)
        text = tr.transcript_text()
    return StrategyResult(
        strategy, BayesNet(schema, structure, params), text, [h.ledger.spent for h in holders], extra
    )
