import os
import subprocess
import sys

import numpy as np
import pytest

from panbayes import _kernels_py, kernels

cy = pytest.importorskip("panbayes._kernels")


@pytest.mark.parametrize("universe,m", [(1, 1), (10, 10), (1000, 7), (100_000, 500)])
def test_sampling_backends_agree(universe, m):
    u = np.random.default_rng(universe).random(m)
    a = _kernels_py.sample_without_replacement(universe, m, u)
    b = np.asarray(cy.sample_without_replacement(universe, m, u))
    assert np.array_equal(a, b)
    assert np.unique(a).size == m and a.min() >= 0 and a.max() < universe


def test_sampling_edge_uniform():
    # u just below 1 must not index past the universe
    u = np.full(5, np.nextafter(1.0, 0.0))
    for impl in (_kernels_py, cy):
        assert np.asarray(impl.sample_without_replacement(5, 5, u)).max() == 4


def test_sampling_uniform_marginal():
    rng = np.random.default_rng(0)
    counts = np.zeros(20)
    for _ in range(20_000):
        counts[_kernels_py.sample_without_replacement(20, 3, rng.random(3))] += 1
    expected = 20_000 * 3 / 20
    assert ((counts - expected) ** 2 / expected).sum() < 43.8  # chi2(19) 0.999 quantile


def test_hit_positions_agree():
    rng = np.random.default_rng(1)
    pos = np.full(101, -1, dtype=np.int64)
    pos[rng.choice(101, 30, replace=False)] = np.arange(30)
    ids = rng.integers(0, 101, 1000)
    pa, ia = _kernels_py.hit_positions(ids, pos)
    pb, ib = cy.hit_positions(ids, pos)
    assert np.array_equal(pa, np.asarray(pb)) and np.array_equal(ia, np.asarray(ib))
    with pytest.raises(IndexError):
        _kernels_py.hit_positions([101], pos)
    with pytest.raises(IndexError):
        cy.hit_positions(np.array([101]), pos)


@pytest.mark.parametrize("dtype", [np.uint8, np.float64])
def test_scatter_last_agree(dtype):
    rng = np.random.default_rng(2)
    positions = rng.integers(0, 50, 400)
    values = rng.integers(0, 2, 400).astype(dtype)
    a = np.zeros(50, dtype=dtype)
    b = np.zeros(50, dtype=dtype)
    _kernels_py.scatter_last(a, positions, values)
    cy.scatter_last(b, positions, values)
    ref = np.zeros(50, dtype=dtype)
    for p, v in zip(positions, values):
        ref[p] = v
    assert np.array_equal(a, ref) and np.array_equal(b, ref)


def test_backend_selected_at_import():
    assert kernels.BACKEND == "cython"
    env = dict(os.environ, PANBAYES_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import panbayes.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_estimates_identical_across_backends():
    code = ("from panbayes.pan_private import estimate_density;"
            "from panbayes.stream import StreamSpec, generate_stream;"
            "s = generate_stream(StreamSpec('zipf', 5000, 3000, seed=3));"
            "print(repr(estimate_density('quantized_laplace', 0.3, 800, s, 11)[0]))")
    outs = []
    for flag in ("0", "1"):
        env = dict(os.environ, PANBAYES_PURE_PYTHON=flag)
        outs.append(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                                   text=True, check=True).stdout)
    assert outs[0] == outs[1]
