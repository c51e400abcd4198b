"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def sample_without_replacement(universe: int, m: int, u) -> np.ndarray:
    """Partial Fisher-Yates over ``0..universe-1`` with a sparse swap map."""
    if m > universe or m < 0:
        raise ValueError("sample size out of range")
    u = np.asarray(u, dtype=np.float64)
    swapped: dict[int, int] = {}
    out = np.empty(m, dtype=np.int64)
    for i in range(m):
        j = i + int(u[i] * float(universe - i))
        if j >= universe:
            j = universe - 1
        vi = swapped.get(i, i)
        out[i] = swapped.get(j, j)
        swapped[j] = vi
    return out


def hit_positions(ids, pos):
    ids = np.asarray(ids, dtype=np.int64)
    pos = np.asarray(pos, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= pos.size):
        raise IndexError("user id outside universe")
    p = pos[ids]
    idx = np.flatnonzero(p >= 0).astype(np.int64)
    return p[idx], idx


def scatter_last(cells, positions, values):
    positions = np.asarray(positions, dtype=np.int64)
    if positions.size == 0:
        return
    # first occurrence in the reversed order is the last write
    rev = positions[::-1]
    _, first = np.unique(rev, return_index=True)
    cells[rev[first]] = np.asarray(values)[::-1][first]
