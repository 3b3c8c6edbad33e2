import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctrl_hin.errors import ContractError, SamplingError
from ctrl_hin.graph import EventRecord, TemporalHinGraph
from ctrl_hin.sampler import (EmptyNeighborhood, Sampler, make_rng, sample_negative_edge,
                              sample_negative_event, sample_neighbors)

from conftest import make_toy


def within_3se(count, n, p):
    se = math.sqrt(p * (1 - p) / n)
    return abs(count / n - p) <= 3 * se


def star(k):
    """Node 0 (type a) linked to k type-b nodes at times 1..k."""
    nodes = [(0, "a", [1.0])] + [(i, "b", [0.0]) for i in range(1, k + 1)]
    return TemporalHinGraph(nodes, [(0, i, "r", i) for i in range(1, k + 1)])


def test_single_neighbor_repeated():
    g = star(1)
    b = sample_neighbors(g, 0, 50, 10, make_rng(0))
    assert b.entries == ((1, "r", 1),) * 10 and b.target == 0 and b.time == 50


def test_empty_neighborhood():
    g = star(1)
    out = sample_neighbors(g, 0, 1, 10, make_rng(0))
    assert out is EmptyNeighborhood and not out


def test_bad_fanout():
    with pytest.raises(ContractError):
        sample_neighbors(star(1), 0, 5, 0, make_rng(0))


def test_uniform_over_three():
    g = star(3)
    b = sample_neighbors(g, 0, 50, 3000, make_rng(7))
    c = Counter(v for v, _, _ in b.entries)
    assert set(c) == {1, 2, 3}
    assert all(within_3se(c[v], 3000, 1 / 3) for v in (1, 2, 3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 60))
def test_neighbors_causal(seed, t):
    nodes, edges, _ = make_toy(seed)
    g = TemporalHinGraph(nodes, edges)
    rng = make_rng(seed)
    for v in g.node_ids:
        b = sample_neighbors(g, v, t, 5, rng)
        if b:
            assert all(et < t for _, _, et in b.entries)
            assert len(b.entries) == 5
        else:
            assert g.dynamic_degree(v, t) == 0


def test_equal_seeds_equal_epoch():
    nodes, edges, events = make_toy(3)
    g = TemporalHinGraph(nodes, edges, events)
    a, b = Sampler(g, 4, seed=11), Sampler(g, 4, seed=11)
    for ev in events:
        for v in ev.nodes:
            assert a.neighbors(v, ev.time) == b.neighbors(v, ev.time)
        if ev.time > 20:
            assert a.negative_event(ev) == b.negative_event(ev)


# -- negatives -------------------------------------------------------------------


def paper_graph():
    """Papers 10, 11 born at t=1, 2; authors 1, 2, 3; venue 7."""
    nodes = [(10, "paper", [1.0]), (11, "paper", [0.0]), (12, "paper", [0.5]),
             (1, "author", [1.0]), (2, "author", [0.0]), (3, "author", [0.2]), (7, "venue", [])]
    edges = [(10, 1, "writes", 1), (11, 2, "writes", 2), (12, 1, "writes", 5), (12, 10, "cites", 5),
             (12, 7, "published_in", 5)]
    events = [EventRecord(10, (1,), ((10, 1, "writes"),), 1), EventRecord(11, (2,), ((11, 2, "writes"),), 2),
              EventRecord(12, (1, 10, 7), ((12, 1, "writes"), (12, 10, "cites"), (12, 7, "published_in")), 5)]
    return TemporalHinGraph(nodes, edges, events), events


def test_negative_event_anchor_only():
    g, _ = paper_graph()
    ev = EventRecord(12, (), (), 5)
    assert sample_negative_event(g, ev, make_rng(0)) == ev


def test_negative_event_preserves_types():
    g, events = paper_graph()
    ev = events[2]
    rng = make_rng(1)
    for _ in range(200):
        neg = sample_negative_event(g, ev, rng)
        assert neg.anchor == ev.anchor and neg.time == ev.time
        assert [g.type_of(v) for v in neg.member_nodes] == [g.type_of(v) for v in ev.member_nodes]
        assert [r for _, _, r in neg.member_edges] == [r for _, _, r in ev.member_edges]
        # the cited paper must already exist: only papers 10, 11 are born before t=5
        assert neg.member_nodes[1] in (10, 11)
        assert neg.member_nodes[2] == 7


def test_negative_event_binomial():
    g, events = paper_graph()
    rng = make_rng(2)
    hits = sum(sample_negative_event(g, events[2], rng).member_nodes[1] == 10 for _ in range(1000))
    assert within_3se(hits, 1000, 0.5)


def test_negative_event_no_candidate():
    g, events = paper_graph()
    with pytest.raises(SamplingError):
        sample_negative_event(g, EventRecord(11, (10,), ((11, 10, "cites"),), 1), make_rng(0))


def test_negative_edge_single_alternative():
    g, _ = paper_graph()
    for s in range(20):
        assert sample_negative_edge(g, (12, 10, "cites", 5), make_rng(s)) == (12, 11, "cites", 5)


def test_negative_edge_uniform_over_three():
    g, _ = paper_graph()
    nodes = [(i, "author", [0.0]) for i in range(20, 24)] + [(30, "paper", [1.0])]
    g = TemporalHinGraph(nodes, [(30, 20, "writes", 1), (30, 21, "cites", 2)])
    rng = make_rng(5)
    draws = [sample_negative_edge(g, (30, 20, "writes", 9), rng) for _ in range(3000)]
    c = Counter(d[1] for d in draws)
    assert set(c) == {21, 22, 23}
    assert all(within_3se(c[v], 3000, 1 / 3) for v in (21, 22, 23))
    assert all(d[0] == 30 and d[2:] == ("writes", 9) for d in draws)


def test_negative_edge_no_candidate():
    g, _ = paper_graph()
    with pytest.raises(SamplingError):
        sample_negative_edge(g, (12, 7, "published_in", 5), make_rng(0))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_negatives_predate_query(seed):
    from ctrl_hin.synth import SynthConfig, generate
    ds = generate(SynthConfig(n_events=60, seed=seed % 7,
                              member_types={"author": {"count": 12, "feature_dim": 2},
                                            "venue": {"count": 3, "feature_dim": 2}}, anchor_feature_dim=2))
    g = TemporalHinGraph(ds.nodes, ds.edges, ds.events)
    rng = make_rng(seed)
    for ev in ds.events[10::7]:
        neg = sample_negative_event(g, ev, rng)
        for v in neg.member_nodes:
            assert g.birth[g.index(v)] < ev.time
        for s, d, r in ev.member_edges:
            assert g.birth[g.index(sample_negative_edge(g, (s, d, r, ev.time), rng)[1])] < ev.time
