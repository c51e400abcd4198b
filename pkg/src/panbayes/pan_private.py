"""Pan-private stream density estimators, budget analysis and bound optimizers.

All four estimators share one lifecycle: sample m users, give each a cell drawn
from an initial law, redraw a user's cell from an update law whenever the user
appears, and at the end debias the cell mean and add Laplace(0, 1/(eps*m))
output noise.

Randomness is consumed through inverse CDFs in a fixed order (sample slots,
initial cells, one uniform per touched cell, one for the output noise). Runs
of different kinds with the same seed therefore share their random numbers,
which the MSE comparisons rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from . import kernels
from .dp_core import InvalidParameterError, RandomSource
from .stream import Stream

KINDS = ("dwork", "opt_bernoulli", "laplace", "quantized_laplace")
_ALIASES = {
    "opt-bernoulli": "opt_bernoulli",
    "optbern": "opt_bernoulli",
    "quantized": "quantized_laplace",
    "quantized-laplace": "quantized_laplace",
}
MAX_EPSILON = 0.5


def canonical_kind(kind: str) -> str:
    k = _ALIASES.get(kind, kind)
    if k not in KINDS:
        raise InvalidParameterError(f"unknown estimator kind {kind!r}")
    return k


def _laplace_inverse(u, mu, b):
    u = np.asarray(u, dtype=float)
    c = u - 0.5
    tail = np.maximum(1.0 - 2.0 * np.abs(c), np.finfo(float).tiny)
    return mu - b * np.sign(c) * np.log(tail)


@dataclass(frozen=True)
class BernoulliLaw:
    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise InvalidParameterError("Bernoulli parameter must lie in (0, 1)")

    dtype = np.uint8

    def inverse(self, u):
        return (np.asarray(u) < self.p).astype(np.uint8)

    def density(self, o):
        o = np.asarray(o)
        return np.where(o == 1, self.p, 1.0 - self.p)

    @property
    def mean(self) -> float:
        return self.p

    @property
    def variance(self) -> float:
        return self.p * (1.0 - self.p)


@dataclass(frozen=True)
class LaplaceLaw:
    mu: float
    b: float

    def __post_init__(self):
        if not self.b > 0:
            raise InvalidParameterError("Laplace scale must be positive")

    dtype = np.float64

    def inverse(self, u):
        return _laplace_inverse(u, self.mu, self.b)

    def density(self, x):
        return np.exp(-np.abs(np.asarray(x, dtype=float) - self.mu) / self.b) / (2 * self.b)

    def log_density(self, x):
        return -np.abs(np.asarray(x, dtype=float) - self.mu) / self.b - math.log(2 * self.b)

    @property
    def mean(self) -> float:
        return self.mu

    @property
    def variance(self) -> float:
        return 2 * self.b**2


@dataclass(frozen=True)
class CellDistributions:
    init: BernoulliLaw | LaplaceLaw
    upd: BernoulliLaw | LaplaceLaw

    @property
    def gap(self) -> float:
        return self.upd.mean - self.init.mean


def _check_eps(eps: float) -> None:
    if not 0.0 < eps <= MAX_EPSILON:
        raise InvalidParameterError(f"epsilon must lie in (0, {MAX_EPSILON}], got {eps}")


def cell_distributions(kind: str, eps: float, mu_init: float = 0.0, mu_upd: float = 1.0, c: float = 0.5) -> CellDistributions:
    kind = canonical_kind(kind)
    if kind == "dwork":
        return CellDistributions(BernoulliLaw(0.5), BernoulliLaw(0.5 + eps / 4))
    if kind == "opt_bernoulli":
        t = math.tanh(eps / 2)
        return CellDistributions(BernoulliLaw(c * (1 - t)), BernoulliLaw(c * (1 + t)))
    if kind == "laplace":
        if not mu_init < mu_upd:
            raise InvalidParameterError("need mu_init < mu_upd")
        b = (mu_upd - mu_init) / eps
        return CellDistributions(LaplaceLaw(mu_init, b), LaplaceLaw(mu_upd, b))
    q = 0.5 * math.exp(-eps / 2)
    return CellDistributions(BernoulliLaw(q), BernoulliLaw(1 - q))


@dataclass
class PanPrivateState:
    """Intrusion-visible state: the sampled ids and their cells.

    ``sample`` holds 1-based user ids; ``pos[id]`` is the id's cell index or -1.
    """

    kind: str
    eps: float
    universe_size: int
    sample: np.ndarray
    cells: np.ndarray
    laws: CellDistributions
    rng: RandomSource
    pos: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return int(self.sample.size)


def make_estimator(
    kind: str, eps: float, m: int, universe_size: int, rng: RandomSource,
    mu_init: float = 0.0, mu_upd: float = 1.0,
) -> PanPrivateState:
    """Sample m users without replacement and draw their initial cells."""
    kind = canonical_kind(kind)
    _check_eps(eps)
    if not 1 <= m <= universe_size:
        raise InvalidParameterError("sample size must satisfy 1 <= m <= |U|")
    laws = cell_distributions(kind, eps, mu_init, mu_upd)
    slots = kernels.sample_without_replacement(int(universe_size), int(m), rng.uniform(m))
    sample = slots + 1
    pos = np.full(universe_size + 1, -1, dtype=np.int64)
    pos[sample] = np.arange(m, dtype=np.int64)
    cells = np.ascontiguousarray(laws.init.inverse(rng.uniform(m)), dtype=laws.init.dtype)
    return PanPrivateState(kind, eps, universe_size, sample, cells, laws, rng, pos)


def ingest_many(state: PanPrivateState, ids, signs=None) -> PanPrivateState:
    """Process updates in order; a touched cell is redrawn on every appearance.

    Inserts redraw from the update law, deletes from the initial law.
    """
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    if ids.size == 0:
        return state
    if ids.min() < 1 or ids.max() > state.universe_size:
        raise InvalidParameterError("user id outside universe")
    positions, idx = kernels.hit_positions(ids, state.pos)
    if positions.size == 0:
        return state
    u = state.rng.uniform(positions.size)
    values = state.laws.upd.inverse(u)
    if signs is not None:
        neg = np.asarray(signs)[idx] < 0
        if neg.any():
            values = np.where(neg, state.laws.init.inverse(u), values)
    values = np.ascontiguousarray(values, dtype=state.cells.dtype)
    kernels.scatter_last(state.cells, np.ascontiguousarray(positions), values)
    return state


def ingest(state: PanPrivateState, update: int, delete: bool = False) -> PanPrivateState:
    return ingest_many(state, [update], None if not delete else [-1])


def ingest_stream(state: PanPrivateState, s: Stream) -> PanPrivateState:
    if s.universe_size != state.universe_size:
        raise InvalidParameterError("stream and estimator disagree on the universe")
    return ingest_many(state, s.updates, s.signs)


def snapshot_state(state: PanPrivateState) -> np.ndarray:
    """Read-only copy of the cells, aligned with ``state.sample``."""
    snap = state.cells.copy()
    snap.setflags(write=False)
    return snap


def debias(kind: str, eps: float, mean: float, mu_init: float = 0.0, mu_upd: float = 1.0) -> float:
    kind = canonical_kind(kind)
    if kind == "dwork":
        return 4.0 / eps * (mean - 0.5)
    if kind == "opt_bernoulli":
        t = math.tanh(eps / 2)
        return (mean - 0.5 + 0.5 * t) / t
    if kind == "laplace":
        return (mean - mu_init) / (mu_upd - mu_init)
    q = 0.5 * math.exp(-eps / 2)
    return (mean - q) / (1 - 2 * q)


def finalize_density(state: PanPrivateState, rng: RandomSource | None = None, clip: bool = False) -> float:
    """Unbiased density estimate; ``clip`` only for display."""
    rng = state.rng if rng is None else rng
    laws = state.laws
    mean = float(state.cells.mean(dtype=float))
    if state.kind == "laplace":
        est = (mean - laws.init.mu) / (laws.upd.mu - laws.init.mu)
    else:
        est = (mean - laws.init.mean) / laws.gap
    est += float(_laplace_inverse(rng.uniform(), 0.0, 1.0 / (state.eps * state.m)))
    return min(max(est, 0.0), 1.0) if clip else est


def estimate_density(
    kind: str, eps: float, m: int, s: Stream, seed: int, mu_init: float = 0.0, mu_upd: float = 1.0
) -> tuple[float, PanPrivateState]:
    rng = RandomSource(seed)
    st = make_estimator(kind, eps, m, s.universe_size, rng, mu_init, mu_upd)
    ingest_stream(st, s)
    return finalize_density(st), st


# --- privacy analysis ----------------------------------------------------------


def privacy_log_ratios(kind: str, eps: float, grid: np.ndarray | None = None, **kw) -> np.ndarray:
    """ln(upd(o)/init(o)) over every bit, or over a grid of reals for laplace."""
    laws = cell_distributions(kind, eps, **kw)
    if isinstance(laws.init, BernoulliLaw):
        o = np.array([0, 1])
        return np.log(laws.upd.density(o)) - np.log(laws.init.density(o))
    if grid is None:
        lo, hi = laws.init.mu - 10 * laws.init.b, laws.upd.mu + 10 * laws.upd.b
        grid = np.linspace(lo, hi, 10_000)
    return laws.upd.log_density(grid) - laws.init.log_density(grid)


def actual_budget_used(kind: str, eps: float, **kw) -> float:
    """Supremum over outcomes of |ln(upd(o)/init(o))|."""
    _check_eps(eps)
    laws = cell_distributions(kind, eps, **kw)
    if isinstance(laws.init, LaplaceLaw):
        return (laws.upd.mu - laws.init.mu) / laws.init.b
    p0, p1 = laws.init.p, laws.upd.p
    return max(abs(math.log(p1 / p0)), abs(math.log((1 - p1) / (1 - p0))))


def dwork_budget_closed_form(eps: float) -> float:
    return max(math.log1p(eps / 2), -math.log1p(-eps / 2))


# --- quantizer -----------------------------------------------------------------


@dataclass(frozen=True)
class QuantizerDesign:
    boundary: float
    a1: float
    a2: float
    p_init: float
    p_upd: float


def design_binary_quantizer(mu_init: float, mu_upd: float, eps: float) -> QuantizerDesign:
    """Two-level MMSE quantizer for the equal mixture of the two cell laws.

    Returns the boundary, the representation points and the probability that a
    quantized cell reads 1 under each law.
    """
    if not mu_init < mu_upd:
        raise InvalidParameterError("need mu_init < mu_upd")
    if not eps > 0:
        raise InvalidParameterError("epsilon must be positive")
    gap = mu_upd - mu_init
    shift = gap / eps * math.exp(-eps / 2)
    q = 0.5 * math.exp(-eps / 2)
    return QuantizerDesign((mu_init + mu_upd) / 2, mu_init - shift, mu_upd + shift, q, 1 - q)


def normalized_mu_init(eps: float) -> float:
    """mu_init (with mu_upd = 1 - mu_init) that puts the points at 0 and 1."""
    e = math.exp(-eps / 2)
    return e / (2 * e + eps)


def quantize(x, design: QuantizerDesign) -> np.ndarray:
    return (np.asarray(x, dtype=float) > design.boundary).astype(np.uint8)


# --- accuracy ------------------------------------------------------------------


def theoretical_mse(kind: str, eps: float, m: int, density: float = 0.0) -> float:
    """Closed-form MSE of the estimate about d(S_M) for a fixed sample.

    dwork uses the published form 4/(m eps^2) - d^2/m + 2/(m^2 eps^2); the
    Bernoulli kinds use p(1-p)/(m gap^2); all add the output noise 2/(m eps)^2.
    """
    kind = canonical_kind(kind)
    out_noise = 2.0 / (m * m * eps * eps)
    if kind == "dwork":
        return 4.0 / (m * eps * eps) - density**2 / m + out_noise
    if kind == "laplace":
        return 2.0 * (m + 1) / (m * m * eps * eps)
    laws = cell_distributions(kind, eps)
    var = (1 - density) * laws.init.variance + density * laws.upd.variance
    return var / (m * laws.gap**2) + out_noise


def opt_bernoulli_mse_bound(eps: float, m: int) -> float:
    return 1.0 / (4 * m * math.tanh(eps / 2) ** 2) + 2.0 / (m * m * eps * eps)


def _middle_constant(kind: str, eps: float) -> float:
    """C in the cell-concentration term exp(-m alpha^2 d1^2 (1-d2)^2 / C)."""
    kind = canonical_kind(kind)
    if kind in ("dwork", "laplace"):
        return 8.0 / eps**2
    laws = cell_distributions(kind, eps)
    return 1.0 / (2.0 * laws.gap**2)


def sample_size_terms(delta, eps: float, alpha: float, beta: float, kind: str = "dwork") -> tuple[float, float, float]:
    d1, d2, d3, d4 = delta
    m1 = math.log(2 / (beta * d3)) / (2 * alpha**2 * (1 - d1) ** 2)
    m2 = _middle_constant(kind, eps) * math.log(2 / (beta * d4)) / (alpha**2 * d1**2 * (1 - d2) ** 2)
    m3 = math.log(1 / (beta * (1 - d3 - d4))) / (eps * alpha * d1 * d2)
    return m1, m2, m3


def asymptotic_sample_size(eps: float, alpha: float, beta: float) -> float:
    """The loose choice 128/(eps^2 alpha^2) ln(1/beta)."""
    return 128.0 / (eps**2 * alpha**2) * math.log(1 / beta)


_LO, _HI = 1e-12, 1 - 1e-12


def _unpack4(z):
    d1, d2, c, a = np.clip(z, _LO, _HI)
    return float(d1), float(d2), float(c * a), float(c * (1 - a))


@dataclass(frozen=True)
class SampleSizeResult:
    m_star: int
    value: float
    delta: tuple[float, float, float, float]
    terms: tuple[float, float, float]


def _multistart(objective, dim: int, starts, tol: float = 1e-10):
    best = None
    opts = {"xatol": 1e-10, "fatol": tol, "maxiter": 20_000, "maxfev": 40_000}
    bounds = [(_LO, _HI)] * dim
    for x0 in starts:
        res = minimize(objective, np.array(x0, dtype=float), method="Nelder-Mead", bounds=bounds, options=opts)
        if best is None or res.fun < best.fun:
            best = res
    # polish from the winner twice; simplex restarts escape early stalls
    for _ in range(2):
        res = minimize(objective, best.x, method="Nelder-Mead", bounds=bounds, options=opts)
        if res.fun <= best.fun:
            best = res
    return best


def optimize_sample_size(eps: float, alpha: float, beta: float, kind: str = "dwork") -> SampleSizeResult:
    """Smallest m with max(m1, m2, m3) <= m over the delta box.

    delta3 and delta4 are searched as c*a and c*(1-a) with c, a in (0, 1), so
    delta3 + delta4 < 1 holds throughout. The max of the three log-terms has a
    kinked ridge at the optimum where plain simplex search stalls, so each run
    minimizes a log-sum-exp smoothing (1/tau) log sum exp(tau log m_i) with tau
    raised step by step. Sixteen fixed starts are screened at the smoothest
    level and the best three are carried through the continuation.
    """
    if not (eps > 0 and 0 < alpha < 1 and 0 < beta < 1):
        raise InvalidParameterError("need eps > 0 and alpha, beta in (0, 1)")

    def log_terms(z):
        return np.log(sample_size_terms(_unpack4(z), eps, alpha, beta, kind))

    def smoothed(tau):
        return lambda z: float(logsumexp(tau * log_terms(z)) / tau)

    bounds = [(_LO, _HI)] * 4
    opts = {"xatol": 1e-12, "fatol": 1e-10, "maxiter": 20_000, "maxfev": 40_000}
    screened = []
    for x0 in product((0.25, 0.75), repeat=4):
        res = minimize(smoothed(10.0), np.array(x0), method="Nelder-Mead", bounds=bounds, options=opts)
        screened.append((float(log_terms(res.x).max()), res.x))
    screened.sort(key=lambda t: t[0])
    best = None
    for _, x in screened[:3]:
        for tau in (1e2, 1e3, 1e4, 1e5, 1e6):
            x = minimize(smoothed(tau), x, method="Nelder-Mead", bounds=bounds, options=opts).x
        v = float(log_terms(x).max())
        if best is None or v < best[0]:
            best = (v, x)
    delta = _unpack4(best[1])
    terms = sample_size_terms(delta, eps, alpha, beta, kind)
    value = max(terms)
    return SampleSizeResult(int(math.ceil(value - 1e-9)), value, delta, terms)


def _log_error_bound(delta, eps: float, alpha: float, m: float, kind: str) -> float:
    d1, d2 = delta
    c = _middle_constant(kind, eps)
    exponents = [
        -2 * m * alpha**2 * (1 - d1) ** 2,
        -m * alpha**2 * d1**2 * (1 - d2) ** 2 / c,
        -eps * alpha * m * d1 * d2,
    ]
    return float(logsumexp(exponents, b=[2.0, 2.0, 1.0]))


def error_bound(delta, eps: float, alpha: float, m: float, kind: str = "dwork") -> float:
    return math.exp(_log_error_bound(delta, eps, alpha, m, kind))


@dataclass(frozen=True)
class ErrorBoundResult:
    beta: float
    delta: tuple[float, float]


def tightest_error_bound(eps: float, alpha: float, m: float, kind: str = "dwork") -> ErrorBoundResult:
    """Minimize the three-term tail bound over (delta1, delta2)."""

    def objective(z):
        d = np.clip(z, _LO, _HI)
        # log domain, so a bound that underflows to 0 still has a gradient
        return _log_error_bound(d, eps, alpha, m, kind)

    grid = (0.2, 0.4, 0.6, 0.8)
    res = _multistart(objective, 2, list(product(grid, repeat=2)))
    d = tuple(float(v) for v in np.clip(res.x, _LO, _HI))
    return ErrorBoundResult(error_bound(d, eps, alpha, m, kind), d)  # type: ignore[arg-type]
