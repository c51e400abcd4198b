"""Experiment drivers producing CSV tables.

CSV schemas (header row always written):

* bn-experiment: ``strategy,epsilon,M,k,n,reps,mean_cross_entropy,stderr,seed``.
  Baseline rows (``true-net``, ``naive``, ``central-greedy``) leave ``epsilon``
  and ``M`` empty.
* stream-experiment: ``distribution,kind,epsilon,m,T,universe,density,reps,
  empirical_mse,mse_stderr,theoretical_mse,alpha,empirical_perr,beta_bound,seed``.
  MSE is measured about the true density d(S); the theoretical column adds the
  sampling variance of d(S_M) to the closed-form estimator variance.
* entropy-oracle: ``n,d,M,b,empirical_bias,theoretical_leading,empirical_mse,
  sigma2_over_n,bias_stderr,noise_terms,trials,seed`` in nats.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .bayes_net import (
    BayesNet,
    greedy_structure_learn,
    independent_structure,
    learn_parameters_central,
    prior_sample,
)
from .discrete_prob import cross_entropy
from .distributed import STRATEGIES, partition_round_robin, run_strategy
from .dp_core import InvalidParameterError, RandomSource
from .entropy_analysis import (
    NoiseRegime,
    entropy_bias_theoretical,
    entropy_estimator_monte_carlo,
    entropy_mse_theoretical,
)
from .fixtures import synthetic_network
from .pan_private import (
    KINDS,
    canonical_kind,
    estimate_density,
    optimize_sample_size,
    theoretical_mse,
    tightest_error_bound,
)
from .stream import StreamSpec, generate_stream, stream_density


@dataclass
class ExperimentConfig:
    experiment: str = "bn"
    epsilons: list[float] = field(default_factory=lambda: [0.2, 0.5, 1.0, 2.0])
    holders: list[int] = field(default_factory=lambda: [3])
    degrees: list[int] = field(default_factory=lambda: [1])
    repetitions: int = 50
    seed: int = 0
    output: str | None = None
    # bn
    n: int = 4000
    strategies: list[str] = field(default_factory=lambda: list(STRATEGIES))
    baselines: bool = True
    transport: str = "inprocess"
    # stream
    kinds: list[str] = field(default_factory=lambda: list(KINDS))
    sample_sizes: list[int] = field(default_factory=lambda: [100, 1000])
    distributions: list[str] = field(default_factory=lambda: ["uniform", "zipf"])
    stream_length: int = 10_000
    universe: int = 10_000
    alpha: float = 0.05
    beta: float = 0.05
    mode: str = "mse"  # or "perr": m = m* per kind and epsilon
    # entropy oracle
    n_values: list[int] = field(default_factory=lambda: [1000])
    domain_sizes: list[int] = field(default_factory=lambda: [4])
    noise_scales: list[float] = field(default_factory=lambda: [0.0, 5.0])
    trials: int = 100_000
    distribution: str = "uniform"
    workers: int = 1

    def __post_init__(self):
        if self.repetitions < 1:
            raise InvalidParameterError("repetitions must be at least 1")

    def paper_scale(self) -> "ExperimentConfig":
        """Parameters of the original study instead of the desk defaults."""
        if self.experiment == "bn":
            return replace(self, n=40_000, repetitions=100)
        if self.experiment == "stream":
            reps = 1000 if self.mode == "perr" else 300
            return replace(self, stream_length=100_000, universe=100_000, repetitions=reps,
                           epsilons=[0.05, 0.1, 0.2, 0.3, 0.4, 0.5])
        return self


_LIST_FIELDS = {f.name for f in fields(ExperimentConfig) if str(f.type).startswith("list")}


def _coerce(name: str, raw: str):
    f = {f.name: f for f in fields(ExperimentConfig)}[name]
    t = str(f.type)
    if name in _LIST_FIELDS:
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if "float" in t:
            return [float(s) for s in items]
        if "int" in t:
            return [int(s) for s in items]
        return items
    if "bool" in t:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if "int" in t and "str" not in t:
        return int(float(raw))
    if "float" in t:
        return float(raw)
    return raw.strip()


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Key-value config: ``key = value`` lines, lists comma separated, ``#`` comments."""
    cfg = base or ExperimentConfig()
    known = {f.name for f in fields(ExperimentConfig)}
    updates = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParameterError(f"bad config line {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise InvalidParameterError(f"unknown config key {key!r}")
        updates[key] = _coerce(key, val)
    return replace(cfg, **updates)


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text(), base)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def rows_to_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_csv(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


# --- Bayesian-network experiment ----------------------------------------------

BN_HEADER = ("strategy", "epsilon", "M", "k", "n", "reps", "mean_cross_entropy", "stderr", "seed")


def _bn_repetition(args) -> dict:
    cfg, rep = args
    net = synthetic_network()
    p_true = net.joint_table()
    root = RandomSource(cfg.seed).child(rep)
    data = prior_sample(net, cfg.n, root.child(0))
    out: dict = {}
    if cfg.baselines:
        naive = independent_structure(data.schema)
        out[("naive", None, None, 0)] = cross_entropy(
            p_true, BayesNet(data.schema, naive, learn_parameters_central(data, naive, smooth=True)).joint_table()
        )
        for k in cfg.degrees:
            s = greedy_structure_learn(data, k)
            model = BayesNet(data.schema, s, learn_parameters_central(data, s, smooth=True))
            out[("central-greedy", None, None, k)] = cross_entropy(p_true, model.joint_table())
    for M in cfg.holders:
        parts = partition_round_robin(data, M)
        for k in cfg.degrees:
            for e_i, eps in enumerate(cfg.epsilons):
                for s_i, strat in enumerate(cfg.strategies):
                    seed = int(root.child(1).child(M).child(k).child(e_i).child(s_i).gen.integers(2**62))
                    res = run_strategy(strat, parts, k, eps, seed, transport=cfg.transport, smooth=True)
                    out[(strat, eps, M, k)] = cross_entropy(p_true, res.model.joint_table())
    return out


def run_bn_experiment(cfg: ExperimentConfig) -> str:
    """Average cross entropy (bits) against the fixture's true distribution."""
    jobs = [(cfg, r) for r in range(cfg.repetitions)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_bn_repetition, jobs))
    else:
        results = [_bn_repetition(j) for j in jobs]
    rows = []
    if cfg.baselines:
        h_true = cross_entropy(synthetic_network().joint_table(), synthetic_network().joint_table())
        rows.append(("true-net", None, None, "", cfg.n, cfg.repetitions, h_true, 0.0, cfg.seed))
    for key in results[0]:
        strat, eps, M, k = key
        mean, se = _mean_se([r[key] for r in results])
        rows.append((strat, eps, M, k, cfg.n, cfg.repetitions, mean, se, cfg.seed))
    text = rows_to_csv(BN_HEADER, rows)
    write_csv(text, cfg.output)
    return text


# --- streaming experiment ---------------------------------------------------------

STREAM_HEADER = (
    "distribution", "kind", "epsilon", "m", "T", "universe", "density", "reps", "empirical_mse",
    "mse_stderr", "theoretical_mse", "alpha", "empirical_perr", "beta_bound", "seed",
)


def sampling_variance(density: float, m: int, universe: int) -> float:
    """Variance of d(S_M) for a uniform sample of m ids without replacement."""
    if universe <= 1:
        return 0.0
    return density * (1 - density) / m * (universe - m) / (universe - 1)


def run_stream_experiment(cfg: ExperimentConfig) -> str:
    """Empirical vs closed-form accuracy of every estimator kind.

    All kinds at a grid point reuse the same per-repetition seeds.
    """
    rows = []
    root = RandomSource(cfg.seed)
    kinds = [canonical_kind(k) for k in cfg.kinds]
    for d_i, dist in enumerate(cfg.distributions):
        for e_i, eps in enumerate(cfg.epsilons):
            if cfg.mode == "perr":
                grid = [(k, optimize_sample_size(eps, cfg.alpha, cfg.beta, k).m_star) for k in kinds]
            else:
                grid = [(k, m) for m in cfg.sample_sizes for k in kinds]
            for kind, m in grid:
                universe = max(cfg.universe, int(math.ceil(1.25 * m)))
                length = cfg.stream_length if universe == cfg.universe else universe
                stream_seed = int(root.child(0).child(d_i).child(m).gen.integers(2**62))
                s = generate_stream(StreamSpec(dist, length, universe, stream_seed))
                d = stream_density(s)
                base = int(root.child(1).child(d_i).child(e_i).child(m).gen.integers(2**62))
                est = np.array([estimate_density(kind, eps, m, s, base + r)[0] for r in range(cfg.repetitions)])
                err = est - d
                mse, mse_se = _mean_se(err**2)
                theo = theoretical_mse(kind, eps, m, d) + sampling_variance(d, m, universe)
                perr = float((np.abs(err) >= cfg.alpha).mean())
                bound = tightest_error_bound(eps, cfg.alpha, m, kind).beta
                rows.append((dist, kind, eps, m, length, universe, d, cfg.repetitions, mse, mse_se,
                             theo, cfg.alpha, perr, bound, cfg.seed))
    text = rows_to_csv(STREAM_HEADER, rows)
    write_csv(text, cfg.output)
    return text


# --- entropy oracle ---------------------------------------------------------------

ENTROPY_HEADER = (
    "n", "d", "M", "b", "empirical_bias", "theoretical_leading", "empirical_mse", "sigma2_over_n",
    "bias_stderr", "noise_terms", "trials", "seed",
)


def oracle_distribution(kind: str, d: int) -> np.ndarray:
    if kind == "uniform":
        return np.full(d, 1.0 / d)
    if kind == "linear":
        w = np.arange(1, d + 1, dtype=float)
        return w / w.sum()
    raise InvalidParameterError(f"unknown distribution {kind!r}")


def run_entropy_oracle(cfg: ExperimentConfig) -> str:
    rows = []
    root = RandomSource(cfg.seed)
    i = 0
    for n in cfg.n_values:
        for d in cfg.domain_sizes:
            p = oracle_distribution(cfg.distribution, d)
            for M in cfg.holders:
                for b in cfg.noise_scales:
                    mc = entropy_estimator_monte_carlo(p, n, M, b, cfg.trials, root.child(i), base=math.e,
                                                       workers=max(cfg.workers, 1))
                    i += 1
                    terms = entropy_bias_theoretical(NoiseRegime(n, d, M, b, float(p.min())))
                    rows.append((n, d, M, b, mc.bias, -terms.leading, mc.mse, entropy_mse_theoretical(p, n),
                                 mc.bias_se, terms.noise_total, cfg.trials, cfg.seed))
    text = rows_to_csv(ENTROPY_HEADER, rows)
    write_csv(text, cfg.output)
    return text
