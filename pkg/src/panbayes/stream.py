"""Cashier-register streams of user ids: generators, ground truth and file I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dp_core import InvalidParameterError, RandomSource


@dataclass(frozen=True)
class Stream:
    """Updates are user ids in 1..universe_size.

    ``signs`` is None for insert-only streams, otherwise +1/-1 per update.
    """

    universe_size: int
    updates: np.ndarray
    signs: np.ndarray | None = None

    def __post_init__(self):
        u = np.asarray(self.updates, dtype=np.int64).reshape(-1)
        if self.universe_size < 1:
            raise InvalidParameterError("universe must be nonempty")
        if u.size and (u.min() < 1 or u.max() > self.universe_size):
            raise InvalidParameterError("user id outside universe")
        u.setflags(write=False)
        object.__setattr__(self, "updates", u)
        if self.signs is not None:
            s = np.asarray(self.signs, dtype=np.int8).reshape(-1)
            if s.shape != u.shape or not np.isin(s, (-1, 1)).all():
                raise InvalidParameterError("signs must be +1/-1, one per update")
            _check_deletes(u, s)
            s.setflags(write=False)
            object.__setattr__(self, "signs", s)

    @property
    def length(self) -> int:
        return int(self.updates.size)

    def final_present(self) -> np.ndarray:
        """Boolean presence per id (index 0 unused)."""
        present = np.zeros(self.universe_size + 1, dtype=bool)
        if self.signs is None:
            present[self.updates] = True
        else:
            # the last update of each id decides its state
            rev_ids = self.updates[::-1]
            _, first = np.unique(rev_ids, return_index=True)
            present[rev_ids[first]] = self.signs[::-1][first] > 0
        return present


def _check_deletes(ids, signs):
    seen = set()
    for uid, s in zip(ids.tolist(), signs.tolist()):
        if s > 0:
            seen.add(uid)
        elif uid not in seen:
            raise InvalidParameterError(f"delete of id {uid} before its first insert")


@dataclass(frozen=True)
class StreamSpec:
    distribution: str  # "uniform" or "zipf"
    length: int
    universe_size: int
    seed: int = 0
    zipf_exponent: float = 1.0

    def __post_init__(self):
        if self.length < 0:
            raise InvalidParameterError("stream length must be nonnegative")
        if self.distribution not in ("uniform", "zipf"):
            raise InvalidParameterError(f"unknown distribution {self.distribution!r}")


def zipf_cdf(universe_size: int, exponent: float = 1.0) -> np.ndarray:
    w = 1.0 / np.arange(1, universe_size + 1, dtype=float) ** exponent
    cdf = np.cumsum(w / w.sum())
    cdf[-1] = 1.0
    return cdf


def generate_stream(spec: StreamSpec, rng: RandomSource | None = None) -> Stream:
    """T i.i.d. ids; zipf ranks map to ids directly (rank 1 is id 1)."""
    rng = RandomSource(spec.seed) if rng is None else rng
    u = rng.uniform(spec.length)
    if spec.distribution == "uniform":
        ids = np.minimum((u * spec.universe_size).astype(np.int64), spec.universe_size - 1) + 1
    else:
        ids = np.searchsorted(zipf_cdf(spec.universe_size, spec.zipf_exponent), u, side="right") + 1
        ids = np.minimum(ids, spec.universe_size)
    return Stream(spec.universe_size, ids)


def expected_density(spec: StreamSpec) -> float:
    """E[d(S)] = (1/|U|) sum_u (1 - (1 - q_u)^T)."""
    if spec.distribution == "uniform":
        q = np.full(spec.universe_size, 1.0 / spec.universe_size)
    else:
        q = np.diff(np.concatenate([[0.0], zipf_cdf(spec.universe_size, spec.zipf_exponent)]))
    return float((-np.expm1(spec.length * np.log1p(-q))).mean())


def stream_density(s: Stream) -> float:
    return float(s.final_present().sum() / s.universe_size)


def sub_stream_density(s: Stream, sample) -> float:
    """Fraction of sampled ids (1-based) whose final state is present."""
    sample = np.asarray(sample, dtype=np.int64)
    if sample.size == 0:
        raise InvalidParameterError("sample must be nonempty")
    if sample.min() < 1 or sample.max() > s.universe_size:
        raise InvalidParameterError("sample outside universe")
    return float(s.final_present()[sample].mean())


def stream_with_distinct(universe_size: int, distinct: int, length: int, rng: RandomSource) -> Stream:
    """Stream over ids 1..distinct, each appearing at least once, total ``length``."""
    if not 0 <= distinct <= universe_size or length < distinct or (distinct == 0 and length):
        raise InvalidParameterError("cannot build such a stream")
    base = np.arange(1, distinct + 1, dtype=np.int64)
    extra = rng.gen.integers(1, distinct + 1, size=length - distinct) if distinct else np.zeros(0, np.int64)
    ids = np.concatenate([base, extra])
    rng.gen.shuffle(ids)
    return Stream(universe_size, ids)


def read_stream(path, universe_size: int | None = None) -> Stream:
    """Read ``id`` or ``id,+``/``id,-`` lines.

    A ``# universe=N`` comment sets the universe; otherwise ``universe_size`` or
    the largest id is used.
    """
    ids, signs, declared = [], [], None
    signed = None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("universe="):
                declared = int(body.split("=", 1)[1])
            continue
        parts = [p.strip() for p in line.split(",")]
        has_sign = len(parts) == 2
        if signed is None:
            signed = has_sign
        elif signed != has_sign:
            raise InvalidParameterError("mixed signed and unsigned lines")
        ids.append(int(parts[0]))
        if has_sign:
            if parts[1] not in ("+", "-"):
                raise InvalidParameterError(f"bad sign in line {raw!r}")
            signs.append(1 if parts[1] == "+" else -1)
    u = universe_size or declared or (max(ids) if ids else 1)
    return Stream(u, np.array(ids, dtype=np.int64), np.array(signs, dtype=np.int8) if signed else None)


def write_stream(s: Stream, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# universe={s.universe_size}\n")
        if s.signs is None:
            fh.write("".join(f"{i}\n" for i in s.updates.tolist()))
        else:
            fh.write("".join(f"{i},{'+' if g > 0 else '-'}\n" for i, g in zip(s.updates.tolist(), s.signs.tolist())))
