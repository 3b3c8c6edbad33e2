import os
import subprocess
import sys

import numpy as np
import pytest

from ctrl_hin import _kernels as K

needs_numba = pytest.mark.skipif(not K.USING_NUMBA, reason="numba not installed")


def _csr(rng, n_nodes=40, n_entries=500):
    owner = rng.integers(n_nodes, size=n_entries)
    times = rng.integers(0, 60, size=n_entries)
    o = np.lexsort((times, owner))
    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(owner, minlength=n_nodes), out=indptr[1:])
    return indptr, np.ascontiguousarray(times[o].astype(np.int64))


def test_count_before_linear_scan(rng):
    indptr, times = _csr(rng)
    nodes = rng.integers(40, size=300)
    q = rng.integers(-5, 70, size=300)
    want = [int(np.sum(times[indptr[v]:indptr[v + 1]] < t)) for v, t in zip(nodes, q)]
    assert np.array_equal(K.np_count_before(indptr, times, nodes, q), want)
    assert np.array_equal(K.count_before(indptr, times, nodes, q), want)


def test_count_before_wide_time_range_fallback():
    indptr = np.array([0, 2, 3], dtype=np.int64)
    times = np.array([-(2**61), 2**61, 0], dtype=np.int64)
    out = K.np_count_before(indptr, times, np.array([0, 0, 1]), np.array([0, 2**62, 1]))
    assert out.tolist() == [1, 2, 1]


def test_draw_positions_empty_rows(rng):
    indptr = np.array([0, 0, 3], dtype=np.int64)
    pos = K.np_draw_positions(indptr, np.array([0, 1]), np.array([0, 3]), np.array([[0.1, 0.9], [0.0, 0.999]]))
    assert pos.tolist() == [[-1, -1], [0, 2]]


@needs_numba
def test_numba_matches_numpy(rng):
    indptr, times = _csr(rng)
    nodes = rng.integers(40, size=1000).astype(np.int64)
    q = rng.integers(-5, 70, size=1000).astype(np.int64)
    a = K.nb_count_before(indptr, times, nodes, q)
    b = K.np_count_before(indptr, times, nodes, q)
    assert np.array_equal(a, b)
    u = rng.random((1000, 7))
    assert np.array_equal(K.nb_draw_positions(indptr, nodes, a, u), K.np_draw_positions(indptr, nodes, a, u))
    idx = rng.integers(10, size=200).astype(np.int64)
    src = rng.normal(size=(200, 5))
    out1 = K.nb_scatter_add_rows(np.zeros((10, 5)), idx, src)
    out2 = K.np_scatter_add_rows(np.zeros((10, 5)), idx, src)
    assert np.allclose(out1, out2, atol=1e-12)


def test_disable_flag_selects_numpy():
    env = dict(os.environ, CTRL_HIN_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "from ctrl_hin import _kernels; print(_kernels.USING_NUMBA)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
