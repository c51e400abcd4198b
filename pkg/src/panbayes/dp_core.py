"""Primitive differentially private mechanisms and budget bookkeeping.

Every randomized routine in the package takes an explicit :class:`RandomSource`;
there is no module-level generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class InvalidParameterError(ValueError):
    """Raised when a mechanism is called with parameters outside its domain."""


class BudgetExhaustedError(RuntimeError):
    """Raised when a ledger debit would exceed the configured total."""


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidParameterError(f"epsilon must be positive, got {self.epsilon}")

    def split(self, parts: int) -> "PrivacyBudget":
        return PrivacyBudget(self.epsilon / parts)


@dataclass(frozen=True)
class Sensitivity:
    delta: float

    def __post_init__(self):
        if self.delta < 0:
            raise InvalidParameterError(f"sensitivity must be nonnegative, got {self.delta}")


class RandomSource:
    """Seeded numpy generator with deterministic child streams.

    ``spawn`` derives children from ``(seed, counter)`` so the n-th child is the
    same regardless of how much the parent has already drawn.
    """

    def __init__(self, seed: int = 0, _key: tuple[int, ...] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._key = _key
        self._counter = 0
        self.gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=_key))
        )

    def spawn(self) -> "RandomSource":
        child = RandomSource(self.seed, self._key + (self._counter,))
        self._counter += 1
        return child

    def child(self, index: int) -> "RandomSource":
        """Child stream by explicit index; does not advance the spawn counter."""
        return RandomSource(self.seed, self._key + (int(index),))

    def uniform(self, size=None):
        return self.gen.random(size)

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, key={self._key})"


def as_budget(eps) -> PrivacyBudget:
    return eps if isinstance(eps, PrivacyBudget) else PrivacyBudget(float(eps))


def sample_laplace(location: float, scale: float, rng: RandomSource, size=None):
    """Draw from Laplace(location, scale)."""
    if not scale > 0:
        raise InvalidParameterError(f"Laplace scale must be positive, got {scale}")
    return rng.gen.laplace(location, scale, size)


def laplace_cdf(x, location: float, scale: float):
    z = (np.asarray(x, dtype=float) - location) / scale
    return np.where(z < 0, 0.5 * np.exp(z), 1.0 - 0.5 * np.exp(-z))


def perturb_counts(
    counts,
    sensitivity: Sensitivity,
    eps: PrivacyBudget,
    clamp: bool,
    rng: RandomSource,
) -> np.ndarray:
    """Laplace mechanism over a count vector.

    ``eps.epsilon == inf`` is accepted as the zero-noise limit.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.size == 0:
        return counts.copy()
    if math.isinf(eps.epsilon) or sensitivity.delta == 0:
        noisy = counts.copy()
    else:
        noisy = counts + sample_laplace(0.0, sensitivity.delta / eps.epsilon, rng, counts.shape)
    if clamp:
        np.maximum(noisy, 0.0, out=noisy)
    return noisy


def exponential_probabilities(scores, score_sensitivity: Sensitivity, epsilon: float) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise InvalidParameterError("exponential mechanism needs at least one candidate")
    if not score_sensitivity.delta > 0:
        raise InvalidParameterError("score sensitivity must be positive")
    if epsilon == 0:
        return np.full(scores.size, 1.0 / scores.size)
    if math.isinf(epsilon):
        top = scores == scores.max()
        return top / top.sum()
    logits = epsilon * scores / (2.0 * score_sensitivity.delta)
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()


def exponential_select(scores, score_sensitivity: Sensitivity, eps, rng: RandomSource) -> int:
    """Index drawn with probability proportional to exp(eps*score/(2*delta)).

    ``eps`` may be a PrivacyBudget or a bare float; 0 degenerates to uniform.
    """
    epsilon = eps.epsilon if isinstance(eps, PrivacyBudget) else float(eps)
    probs = exponential_probabilities(scores, score_sensitivity, epsilon)
    cdf = np.cumsum(probs)
    u = rng.uniform() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), probs.size - 1))


def randomized_response(bit: int, rng: RandomSource) -> int:
    """Two-coin randomized response: truthful on heads, fresh fair coin on tails."""
    if bit not in (0, 1):
        raise InvalidParameterError("randomized response expects a bit")
    if rng.uniform() < 0.5:
        return int(bit)
    return int(rng.uniform() < 0.5)


def randomized_response_law(bit: int) -> dict[int, float]:
    """Exact output distribution by enumerating both coin flips."""
    law = {0: 0.0, 1: 0.0}
    for first in (0, 1):  # 1 = heads
        for second in (0, 1):
            out = bit if first else second
            law[out] += 0.25
    return law


def compose_sequential(budgets: Sequence[PrivacyBudget]) -> PrivacyBudget:
    if not budgets:
        raise InvalidParameterError("cannot compose an empty list of budgets")
    return PrivacyBudget(math.fsum(as_budget(b).epsilon for b in budgets))


@dataclass
class BudgetLedger:
    """Append-only record of (query kind, epsilon) debits against a total."""

    total: float = math.inf
    entries: list[tuple[str, float]] = field(default_factory=list)
    tolerance: float = 1e-12

    @property
    def spent(self) -> float:
        return math.fsum(e for _, e in self.entries)

    @property
    def remaining(self) -> float:
        return self.total - self.spent

    def can_spend(self, epsilon: float) -> bool:
        return self.spent + epsilon <= self.total + self.tolerance

    def debit(self, kind: str, epsilon: float) -> None:
        if not self.can_spend(epsilon):
            raise BudgetExhaustedError(
                f"{kind}: requested {epsilon:.6g}, remaining {self.remaining:.6g}"
            )
        self.entries.append((kind, float(epsilon)))
