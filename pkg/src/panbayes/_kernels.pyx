# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops for the streaming estimators.

Each function has a pure-Python twin in ``_kernels_py`` that returns
bit-identical results; ``panbayes.kernels`` picks one at import time.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef fused cell_t:
    cnp.uint8_t
    cnp.float64_t


def sample_without_replacement(Py_ssize_t universe, Py_ssize_t m, const double[::1] u):
    """Partial Fisher-Yates: first ``m`` slots of a shuffled ``0..universe-1``.

    Slot ``i`` swaps with ``j = i + floor(u[i] * (universe - i))``.
    """
    if m > universe or m < 0:
        raise ValueError("sample size out of range")
    cdef cnp.ndarray[cnp.int64_t, ndim=1] perm_arr = np.arange(universe, dtype=np.int64)
    cdef cnp.int64_t[::1] perm = perm_arr
    cdef Py_ssize_t i, j
    cdef cnp.int64_t tmp
    for i in range(m):
        j = i + <Py_ssize_t>(u[i] * <double>(universe - i))
        if j >= universe:
            j = universe - 1
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
    return perm_arr[:m].copy()


def hit_positions(const cnp.int64_t[::1] ids, const cnp.int64_t[::1] pos):
    """Return (cell positions, update indices) for updates that touch the sample."""
    cdef Py_ssize_t n = ids.shape[0], size = pos.shape[0], k = 0, t
    cdef cnp.int64_t p, uid
    out_pos = np.empty(n, dtype=np.int64)
    out_idx = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] op = out_pos
    cdef cnp.int64_t[::1] oi = out_idx
    for t in range(n):
        uid = ids[t]
        if uid < 0 or uid >= size:
            raise IndexError("user id outside universe")
        p = pos[uid]
        if p >= 0:
            op[k] = p
            oi[k] = t
            k += 1
    return out_pos[:k].copy(), out_idx[:k].copy()


def scatter_last(cell_t[::1] cells, const cnp.int64_t[::1] positions, const cell_t[::1] values):
    """cells[positions[t]] = values[t] in order, so the last write wins."""
    cdef Py_ssize_t t, n = positions.shape[0]
    for t in range(n):
        cells[positions[t]] = values[t]
