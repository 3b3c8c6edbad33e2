"""Temporal neighbour sampling and negative sampling."""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ContractError, SamplingError
from .graph import EventRecord


def make_rng(seed, *keys):
    """Deterministic generator for ``seed`` and an optional key path."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *[int(k) for k in keys]]))


@dataclass(frozen=True)
class NeighborBatch:
    target: int
    time: int
    entries: tuple  # (neighbor id, edge type, edge time), exactly N of them


class _Empty:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "EmptyNeighborhood"

    def __bool__(self):
        return False


EmptyNeighborhood = _Empty()


def draw_neighbors(graph, idx, times, n, u):
    """Vectorised uniform-with-replacement neighbour draws.

    ``idx``/``times`` are dense node indices and query times (length Q),
    ``u`` a (Q, n) block of uniforms. Returns ``(pos, counts)`` where ``pos``
    holds absolute adjacency positions (-1 for rows without history).
    """
    counts = graph.degrees_at(idx, times)
    pos = _kernels.draw_positions(graph.indptr, idx, counts, u.reshape(len(counts), n))
    return pos, counts


def sample_neighbors(graph, v, t, n, rng):
    if n < 1:
        raise ContractError(f"sample_neighbors: N must be >= 1, got {n}")
    i = np.atleast_1d(graph.index(v))
    pos, counts = draw_neighbors(graph, i, np.atleast_1d(t), n, rng.random((1, n)))
    if counts[0] == 0:
        return EmptyNeighborhood
    p = pos[0]
    entries = tuple((int(graph.node_ids[graph.adj_nbr[j]]), graph.edge_types[graph.adj_etype[j]],
                     int(graph.adj_time[j])) for j in p)
    return NeighborBatch(int(v), int(t), entries)


def sample_negative_event(graph, event, rng):
    """Corrupt every non-anchor member with a same-type node born before the event."""
    mapping = {event.anchor: event.anchor}
    for v in event.member_nodes:
        if v in mapping:
            continue
        a = graph.node_type[graph.index(v)]
        cands = graph.candidates(a, event.time)
        if cands.size == 0:
            raise SamplingError(
                f"no candidate of type {graph.node_types[a]!r} before t={event.time} for negative event")
        mapping[v] = int(graph.node_ids[cands[rng.integers(cands.size)]])
    return EventRecord(
        event.anchor,
        tuple(mapping[v] for v in event.member_nodes),
        tuple((mapping[s], mapping[d], r) for s, d, r in event.member_edges),
        event.time,
    )


def sample_negative_edge(graph, edge, rng):
    """Replace the target of ``(src, dst, etype, t)`` with a different same-type node."""
    src, dst, etype, t = edge
    j = int(graph.index(dst))
    cands = graph.candidates(graph.node_type[j], t)
    hit = np.flatnonzero(cands == j)
    size = cands.size - hit.size
    if size <= 0:
        raise SamplingError(
            f"no alternative {graph.node_types[graph.node_type[j]]!r} node before t={t} for negative edge")
    k = int(rng.integers(size))
    if hit.size and k >= hit[0]:
        k += 1
    return (src, int(graph.node_ids[cands[k]]), etype, t)


class Sampler:
    """Per-worker sampling state: a graph handle, the fan-out N and a seed."""

    def __init__(self, graph, n_neighbors=10, seed=0):
        if n_neighbors < 1:
            raise ContractError(f"N must be >= 1, got {n_neighbors}")
        self.graph = graph
        self.n_neighbors = int(n_neighbors)
        self.seed = int(seed)
        self.rng = make_rng(seed)

    def neighbors(self, v, t):
        return sample_neighbors(self.graph, v, t, self.n_neighbors, self.rng)

    def negative_event(self, event, rng=None):
        return sample_negative_event(self.graph, event, rng or self.rng)

    def negative_edge(self, edge, rng=None):
        return sample_negative_edge(self.graph, edge, rng or self.rng)
