import numpy as np
import pytest

from ctrl_hin.graph import EventRecord, TemporalHinGraph


def make_toy(seed=0, n_a=6, n_b=6, n_edges=60, t_max=50, widths=(3, 2), with_events=True):
    """Random two-type / two-edge-type graph with one star event per anchor."""
    rng = np.random.default_rng(seed)
    nodes = [(i, "a", rng.normal(size=widths[0])) for i in range(n_a)]
    nodes += [(n_a + i, "b", rng.normal(size=widths[1])) for i in range(n_b)]
    edges = []
    for _ in range(n_edges):
        s = int(rng.integers(n_a))
        d = int(rng.integers(n_a + n_b))
        while d == s:
            d = int(rng.integers(n_a + n_b))
        edges.append((s, d, "x" if rng.random() < 0.5 else "y", int(rng.integers(1, t_max))))
    events = []
    if with_events:
        by_time = {}
        for s, d, r, t in edges:
            by_time.setdefault((s, t), []).append((s, d, r))
        for (s, t), evs in sorted(by_time.items(), key=lambda kv: kv[0][1]):
            events.append(EventRecord(s, tuple(d for _, d, _ in evs), tuple(evs), t))
    return nodes, edges, events


@pytest.fixture
def toy():
    nodes, edges, events = make_toy()
    return TemporalHinGraph(nodes, edges, []), events


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
