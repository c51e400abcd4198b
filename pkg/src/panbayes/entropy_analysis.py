"""Accuracy theory for the merged noisy entropy estimator, with Monte Carlo oracles.

Formulas work in nats; multiply by ``LOG2E`` (or its square for MSE) to get
bits.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .discrete_prob import ProbabilityTable
from .dp_core import InvalidParameterError, RandomSource

LOG2E = math.log2(math.e)

# coefficient rows for E[c^r] = sum_j n^j * poly_j(p); poly coefficients listed
# from the highest power of p down to p^1
_MULTINOMIAL = {
    1: {1: [1]},
    2: {2: [1, 0], 1: [-1, 1]},
    3: {3: [1, 0, 0], 2: [-3, 3, 0], 1: [2, -3, 1]},
    4: {4: [1, 0, 0, 0], 3: [-6, 6, 0, 0], 2: [11, -18, 7, 0], 1: [-6, 12, -7, 1]},
    5: {
        5: [1, 0, 0, 0, 0],
        4: [-10, 10, 0, 0, 0],
        3: [35, -60, 25, 0, 0],
        2: [-50, 110, -75, 15, 0],
        1: [24, -60, 50, -15, 1],
    },
    6: {
        6: [1, 0, 0, 0, 0, 0],
        5: [-15, 15, 0, 0, 0, 0],
        4: [85, -150, 65, 0, 0, 0],
        3: [-225, 525, -390, 90, 0, 0],
        2: [274, -750, 715, -270, 31, 0],
        1: [-120, 360, -390, 180, -31, 1],
    },
}


def multinomial_moment(n: float, p_i: float, order: int) -> float:
    """Raw moment E[c_i^order] of one multinomial cell count."""
    if order not in _MULTINOMIAL:
        raise InvalidParameterError("order must be in 1..6")
    total = 0.0
    for npow, coefs in _MULTINOMIAL[order].items():
        # coefs[0] multiplies p^order
        poly = sum(c * p_i ** (order - i) for i, c in enumerate(coefs))
        total += n**npow * poly
    return total


def multinomial_cross_moment(n: float, p_i: float, p_j: float, kind: str = "ij") -> float:
    """E[c_i c_j] (kind 'ij') or E[c_i^2 c_j] (kind 'iij') for i != j."""
    if kind == "ij":
        return n * (n - 1) * p_i * p_j
    if kind == "iij":
        return n * (n - 1) * p_i * p_j + n * (n - 1) * (n - 2) * p_i**2 * p_j
    raise InvalidParameterError("kind must be 'ij' or 'iij'")


def laplace_moment(b: float, order: int) -> float:
    """E[eta^order] for one Laplace(0, b) variable."""
    return 0.0 if order % 2 else b**order * math.factorial(order)


def laplace_sum_moment(m_terms: int, b: float, order: int) -> float:
    """E[(eta_1 + ... + eta_M)^order] for i.i.d. Laplace(0, b) terms.

    The sixth moment is written out from the cumulants 2b^2, 12b^4, 240b^6.
    """
    if order < 1 or order > 6:
        raise InvalidParameterError("order must be in 1..6")
    if order % 2:
        return 0.0
    m = m_terms
    if order == 2:
        return 2 * m * b**2
    if order == 4:
        return 12 * (m**2 + m) * b**4
    return (120 * m**3 + 360 * m**2 + 240 * m) * b**6


def laplace_sum_moment_enumerated(m_terms: int, b: float, order: int) -> float:
    """Same quantity by expanding the multinomial sum term by term (oracle)."""

    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for first in range(total + 1):
            for rest in compositions(total - first, parts - 1):
                yield (first,) + rest

    out = 0.0
    for ks in compositions(order, m_terms):
        coef = math.factorial(order)
        prod = 1.0
        for k in ks:
            coef //= math.factorial(k)
            prod *= laplace_moment(b, k)
        out += coef * prod
    return out


@dataclass(frozen=True)
class NoiseRegime:
    n: float
    d: int
    M: int
    b: float
    p_min: float

    def __post_init__(self):
        if self.n <= 0 or self.d <= 0 or self.M <= 0 or self.b < 0 or self.p_min <= 0:
            raise InvalidParameterError("regime parameters must be positive")
        if self.p_min > 1.0 / self.d + 1e-15:
            raise InvalidParameterError("p_min cannot exceed 1/d")

    @property
    def theta(self) -> float:
        return self.M * self.b**2 / self.n**2

    @classmethod
    def from_budget(cls, n, d, M, p_min, eps, n_attrs, k) -> "NoiseRegime":
        """Regime of the noisy-sufficient-statistics protocol: b = 2 C(N, k+1) / eps."""
        return cls(n, d, M, 2.0 * math.comb(n_attrs, k + 1) / eps, p_min)


@dataclass(frozen=True)
class BiasTerms:
    leading: float
    noise_first: float
    noise_second: float
    noise_third: float

    @property
    def noise_total(self) -> float:
        return self.noise_first + self.noise_second + self.noise_third

    @property
    def total(self) -> float:
        return self.leading + self.noise_total

    @property
    def noise_dominated(self) -> bool:
        """True when the noise magnitudes sum to less than the leading term."""
        return self.noise_total < self.leading


def entropy_bias_theoretical(regime: NoiseRegime) -> BiasTerms:
    """Leading bias (d-1)/(2n) plus the three noise-term magnitudes (nats)."""
    n, d, M, b, pm = regime.n, regime.d, regime.M, regime.b, regime.p_min
    return BiasTerms(
        leading=(d - 1) / (2 * n),
        noise_first=d * M * b**2 / (pm * n**2),
        noise_second=d * M * b**2 / (pm**2 * n**3),
        noise_third=d * M**2 * b**4 / (pm**3 * n**4),
    )


def dominance_condition_scale(regime: NoiseRegime, n_attrs: int, k: int) -> float:
    """sqrt(M / (p_min n)) * N^(k+1): budgets well above this keep noise terms small."""
    return math.sqrt(regime.M / (regime.p_min * regime.n)) * n_attrs ** (k + 1)


def entropy_sigma2(p) -> float:
    v = p.probs if isinstance(p, ProbabilityTable) else np.asarray(p, dtype=float)
    v = v[v > 0]
    logs = np.log(v)
    h = -(v * logs).sum()
    return float(max((v * logs**2).sum() - h**2, 0.0))


def entropy_mse_theoretical(p, n: float) -> float:
    """Leading MSE term sigma^2 / n in nats squared."""
    return entropy_sigma2(p) / n


def empirical_entropy_bias_lemma(d: int, n: float) -> float:
    return -(d - 1) / (2 * n)


def empirical_entropy_mse_lemma(p, n: float) -> float:
    """sigma^2/n + (d^2 - 1)/(4 n^2), nats squared."""
    v = p.probs if isinstance(p, ProbabilityTable) else np.asarray(p, dtype=float)
    d = v.size
    return entropy_sigma2(v) / n + (d * d - 1) / (4 * n * n)


def p_min_inequalities(p, p_min: float | None = None) -> dict[str, tuple[float, float]]:
    """(lhs, rhs) for each p_min inequality; (ii)-(iv) need p_min < e^-2."""
    v = np.asarray(p.probs if isinstance(p, ProbabilityTable) else p, dtype=float)
    pm = float(v.min()) if p_min is None else p_min
    d = v.size
    f = np.abs(1 + np.log(v))
    fm = abs(1 + math.log(pm))
    out = {f"i_k{k}": (float((1 / v**k).sum()), d / pm**k) for k in (1, 2, 3)}
    out["ii"] = (float(((1 + np.log(v)) ** 2).sum()), d * (1 + math.log(pm)) ** 2)
    out["iii"] = (float((f / v).sum()), d * fm / pm)
    out["iv"] = (float((f / v**2).sum()), d * fm / pm**2)
    return out


@dataclass(frozen=True)
class MonteCarloResult:
    bias: float
    mse: float
    bias_se: float
    mse_se: float
    trials: int


def _entropy_rows(p_tilde: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p_tilde > 0, -p_tilde * np.log(np.where(p_tilde > 0, p_tilde, 1.0)), 0.0)
    return terms.sum(axis=1)


def _mc_chunk(args):
    p, n, M, b, trials, seed, merged_only = args
    rng = RandomSource(seed)
    counts = rng.gen.multinomial(int(n), p, size=trials).astype(float)
    if b > 0:
        if merged_only:
            # one Laplace per cell with the variance of the M-term sum
            counts += rng.gen.laplace(0.0, b * math.sqrt(M), size=counts.shape)
        else:
            for _ in range(M):
                counts += rng.gen.laplace(0.0, b, size=counts.shape)
    return _entropy_rows(counts / n)


def entropy_estimator_monte_carlo(
    p, n: int, M: int, b: float, trials: int, rng: RandomSource,
    base: float = 2.0, chunk: int = 10_000, workers: int = 4, merged_only: bool = False,
) -> MonteCarloResult:
    """Simulate the merged-noisy-count entropy estimator and return moments of H~ - H.

    Counts are multinomial, each of the M holders adds its own unclamped
    Laplace(0, b) vector, the sum is divided by the nominal n. Per-chunk seeds
    are drawn up front, so the result does not depend on ``workers``.

    Args:
        p: True distribution.
        n: Records per trial.
        M: Number of holders contributing noise.
        b: Laplace scale per holder and cell.
        trials: Number of simulated estimates (at least 1000).
        rng: Master random source.
        base: Logarithm base of the reported entropies (2 gives bits).
        chunk: Trials per work unit.
        workers: Thread count.
        merged_only: Replace the M draws by a single Laplace of equal variance.

    Returns:
        MonteCarloResult with bias, MSE and their standard errors.
    """
    if trials < 1000:
        raise InvalidParameterError("use at least 1000 trials")
    v = np.asarray(p.probs if isinstance(p, ProbabilityTable) else p, dtype=float)
    h_true = float(-(v[v > 0] * np.log(v[v > 0])).sum())
    sizes = [chunk] * (trials // chunk) + ([trials % chunk] if trials % chunk else [])
    seeds = rng.gen.integers(0, 2**63, size=len(sizes))
    jobs = [(v, n, M, b, s, int(sd), merged_only) for s, sd in zip(sizes, seeds)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        h = np.concatenate(list(pool.map(_mc_chunk, jobs)))
    err = (h - h_true) / math.log(base)
    sq = err**2
    return MonteCarloResult(
        bias=float(err.mean()),
        mse=float(sq.mean()),
        bias_se=float(err.std(ddof=1) / math.sqrt(trials)),
        mse_se=float(sq.std(ddof=1) / math.sqrt(trials)),
        trials=trials,
    )
