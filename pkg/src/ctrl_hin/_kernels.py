"""Hot index kernels: numba versions with pure-numpy fallbacks.

Set ``CTRL_HIN_DISABLE_NUMBA=1`` to force the numpy path. Both paths return
bitwise-identical results, so the flag only changes speed.
"""
import os

import numpy as np

_DISABLED = os.environ.get("CTRL_HIN_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba as nb
except ImportError:  # pragma: no cover - depends on environment
    nb = None

USING_NUMBA = nb is not None


# ---------------------------------------------------------------------------
# numpy implementations


def np_count_before(indptr, times, nodes, qtimes):
    """For each query i, count adjacency entries of nodes[i] with time < qtimes[i]."""
    nodes = np.asarray(nodes, dtype=np.int64)
    qtimes = np.asarray(qtimes, dtype=np.int64)
    if nodes.size == 0:
        return np.zeros(0, dtype=np.int64)
    if times.size == 0:
        return np.zeros(nodes.shape, dtype=np.int64)
    tmin = int(times.min())
    width = int(times.max()) - tmin + 2
    n_nodes = indptr.size - 1
    if n_nodes * width >= 2**62:
        out = np.empty(nodes.shape, dtype=np.int64)
        for i, (v, t) in enumerate(zip(nodes.ravel(), qtimes.ravel())):
            lo, hi = indptr[v], indptr[v + 1]
            out.flat[i] = np.searchsorted(times[lo:hi], t, side="left")
        return out
    seg = np.repeat(np.arange(n_nodes, dtype=np.int64), np.diff(indptr))
    keys = seg * width + (times - tmin)
    qkeys = nodes * width + np.clip(qtimes - tmin, 0, width - 1)
    return np.searchsorted(keys, qkeys, side="left") - indptr[nodes]


def np_draw_positions(indptr, nodes, counts, u):
    """Map uniform draws ``u`` (Q x N) to absolute adjacency positions.

    Rows with zero count get -1.
    """
    counts = np.asarray(counts, dtype=np.int64)
    k = np.floor(u * counts[:, None]).astype(np.int64)
    np.minimum(k, np.maximum(counts[:, None] - 1, 0), out=k)
    pos = indptr[np.asarray(nodes, dtype=np.int64)][:, None] + k
    pos[counts == 0] = -1
    return pos


def np_scatter_add_rows(out, idx, src):
    np.add.at(out, idx, src)
    return out


# ---------------------------------------------------------------------------
# numba implementations

if USING_NUMBA:

    @nb.njit(cache=True)
    def nb_count_before(indptr, times, nodes, qtimes):
        out = np.empty(nodes.shape[0], dtype=np.int64)
        for i in range(nodes.shape[0]):
            v = nodes[i]
            t = qtimes[i]
            lo = indptr[v]
            hi = indptr[v + 1]
            base = lo
            while lo < hi:
                mid = (lo + hi) >> 1
                if times[mid] < t:
                    lo = mid + 1
                else:
                    hi = mid
            out[i] = lo - base
        return out

    @nb.njit(cache=True)
    def nb_draw_positions(indptr, nodes, counts, u):
        q, n = u.shape
        pos = np.empty((q, n), dtype=np.int64)
        for i in range(q):
            c = counts[i]
            start = indptr[nodes[i]]
            for j in range(n):
                if c == 0:
                    pos[i, j] = -1
                else:
                    k = np.int64(np.floor(u[i, j] * c))
                    if k > c - 1:
                        k = c - 1
                    pos[i, j] = start + k
        return pos

    @nb.njit(cache=True)
    def nb_scatter_add_rows(out, idx, src):
        for i in range(idx.shape[0]):
            r = idx[i]
            for j in range(src.shape[1]):
                out[r, j] += src[i, j]
        return out

else:
    nb_count_before = nb_draw_positions = nb_scatter_add_rows = None


# ---------------------------------------------------------------------------
# dispatch


def count_before(indptr, times, nodes, qtimes):
    nodes = np.ascontiguousarray(nodes, dtype=np.int64).ravel()
    qtimes = np.ascontiguousarray(qtimes, dtype=np.int64).ravel()
    if USING_NUMBA:
        return nb_count_before(indptr, times, nodes, qtimes)
    return np_count_before(indptr, times, nodes, qtimes)


def draw_positions(indptr, nodes, counts, u):
    nodes = np.ascontiguousarray(nodes, dtype=np.int64).ravel()
    counts = np.ascontiguousarray(counts, dtype=np.int64).ravel()
    u = np.ascontiguousarray(u, dtype=np.float64)
    if USING_NUMBA:
        return nb_draw_positions(indptr, nodes, counts, u)
    return np_draw_positions(indptr, nodes, counts, u)


def scatter_add_rows(out, idx, src):
    """``out[idx[i]] += src[i]`` with repeated indices accumulated in order."""
    idx = np.ascontiguousarray(idx, dtype=np.int64).ravel()
    if USING_NUMBA and out.ndim == 2 and out.flags.c_contiguous:
        src2 = np.ascontiguousarray(src, dtype=out.dtype).reshape(idx.shape[0], out.shape[1])
        return nb_scatter_add_rows(out, idx, src2)
    return np_scatter_add_rows(out, idx, src)
