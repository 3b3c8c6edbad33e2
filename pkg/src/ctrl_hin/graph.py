"""Immutable temporal heterogeneous graph, event records, ingestion and splitting."""
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ContractError, IngestionError, LookupFailure, SplitError

NEVER = np.iinfo(np.int64).min


@dataclass(frozen=True)
class EventRecord:
    anchor: int
    member_nodes: tuple
    member_edges: tuple  # of (src, dst, etype)
    time: int

    def __post_init__(self):
        object.__setattr__(self, "member_nodes", tuple(int(v) for v in self.member_nodes))
        object.__setattr__(self, "member_edges",
                           tuple((int(s), int(d), str(r)) for s, d, r in self.member_edges))
        allowed = set(self.member_nodes) | {self.anchor}
        for s, d, _ in self.member_edges:
            if s not in allowed or d not in allowed:
                raise ContractError(f"event at t={self.time}: edge ({s}, {d}) leaves the event's node set")

    @property
    def nodes(self):
        """Anchor followed by distinct members, in first-seen order."""
        seen = {self.anchor: None}
        for v in self.member_nodes:
            seen.setdefault(v, None)
        return list(seen)

    def to_json(self):
        return {"anchor": self.anchor, "nodes": list(self.member_nodes),
                "edges": [[s, d, r] for s, d, r in self.member_edges], "time": self.time}


class TemporalHinGraph:
    """Typed nodes and timestamped typed undirected edges, frozen after build.

    Node ids are arbitrary integers; internally every node has a dense index
    (its rank in sorted id order). Adjacency is stored CSR-style per index and
    sorted by time, ties kept in input order.
    """

    def __init__(self, nodes, edges, events=()):
        # nodes: iterable of (id, type, feature); edges: iterable of (src, dst, etype, time)
        nodes = list(nodes)
        edges = list(edges)
        ids = np.array([int(n[0]) for n in nodes], dtype=np.int64)
        order = np.argsort(ids, kind="stable")
        self.node_ids = ids[order]
        if self.node_ids.size and np.any(np.diff(self.node_ids) == 0):
            raise ContractError("duplicate node id")
        nodes = [nodes[i] for i in order]
        self.node_types = sorted({str(n[1]) for n in nodes})
        self.edge_types = sorted({str(e[2]) for e in edges})
        self._ntype_index = {a: i for i, a in enumerate(self.node_types)}
        self._etype_index = {r: i for i, r in enumerate(self.edge_types)}
        if len(self.node_types) + len(self.edge_types) <= 2:
            raise ContractError(
                f"not heterogeneous: {len(self.node_types)} node type(s) + {len(self.edge_types)} edge type(s) <= 2")

        n = len(nodes)
        self.node_type = np.array([self._ntype_index[str(x[1])] for x in nodes], dtype=np.int64)
        self.feature_row = np.zeros(n, dtype=np.int64)
        per_type = {a: [] for a in range(len(self.node_types))}
        for i, x in enumerate(nodes):
            a = self.node_type[i]
            self.feature_row[i] = len(per_type[a])
            per_type[a].append(np.asarray(x[2], dtype=np.float64).ravel())
        self.features = {}
        for a, rows in per_type.items():
            widths = {r.size for r in rows}
            if len(widths) > 1:
                raise ContractError(f"ragged features for node type {self.node_types[a]!r}: widths {sorted(widths)}")
            width = widths.pop() if widths else 0
            self.features[a] = np.vstack(rows) if rows and width else np.zeros((len(rows), width))
        self.type_members = {a: np.flatnonzero(self.node_type == a) for a in range(len(self.node_types))}

        src = self.index(np.array([e[0] for e in edges], dtype=np.int64))
        dst = self.index(np.array([e[1] for e in edges], dtype=np.int64))
        ety = np.array([self._etype_index[str(e[2])] for e in edges], dtype=np.int64)
        tim = np.array([int(e[3]) for e in edges], dtype=np.int64)
        self.edge_src, self.edge_dst, self.edge_etype, self.edge_time = src, dst, ety, tim

        # mirror every edge into both endpoints' lists, then sort by (owner, time)
        owner = np.concatenate([src, dst])
        other = np.concatenate([dst, src])
        et2 = np.concatenate([ety, ety])
        t2 = np.concatenate([tim, tim])
        seq = np.concatenate([np.arange(len(edges)), np.arange(len(edges))])
        perm = np.lexsort((seq, t2, owner))
        self.adj_nbr = other[perm]
        self.adj_etype = et2[perm]
        self.adj_time = np.ascontiguousarray(t2[perm])
        counts = np.bincount(owner, minlength=n) if owner.size else np.zeros(n, dtype=np.int64)
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=self.indptr[1:])

        if tim.size:
            self.t_min, self.t_max = int(tim.min()), int(tim.max())
        else:
            self.t_min = self.t_max = 0

        # a node anchoring an event comes into existence at that event
        self.birth = np.full(n, NEVER, dtype=np.int64)
        for ev in events:
            i = int(self.index(ev.anchor))
            b = self.birth[i]
            self.birth[i] = ev.time if b == NEVER else min(b, ev.time)
        self._pools = {}
        for a, members in self.type_members.items():
            o = np.argsort(self.birth[members], kind="stable")
            self._pools[a] = (self.birth[members][o], members[o])

    # -- basic lookups ---------------------------------------------------------

    @property
    def num_nodes(self):
        return self.node_ids.size

    @property
    def num_edges(self):
        return self.edge_src.size

    @property
    def time_span(self):
        return max(self.t_max - self.t_min, 1)

    def index(self, ids):
        """Dense index for node id(s); raises LookupFailure on unknown ids."""
        arr = np.asarray(ids, dtype=np.int64)
        pos = np.searchsorted(self.node_ids, arr)
        pos_c = np.minimum(pos, max(self.node_ids.size - 1, 0))
        if self.node_ids.size == 0 or np.any(self.node_ids[pos_c] != arr):
            bad = arr[self.node_ids[pos_c] != arr] if self.node_ids.size else arr
            raise LookupFailure(f"unknown node id {int(np.ravel(bad)[0])}")
        return pos_c

    def has_node(self, v):
        i = np.searchsorted(self.node_ids, v)
        return i < self.node_ids.size and self.node_ids[i] == v

    def type_of(self, v):
        return self.node_types[self.node_type[self.index(v)]]

    def type_index(self, name):
        return self._ntype_index[name]

    def etype_index(self, name):
        try:
            return self._etype_index[name]
        except KeyError:
            raise LookupFailure(f"unknown edge type {name!r}") from None

    def feature(self, v):
        i = int(self.index(v))
        return self.features[self.node_type[i]][self.feature_row[i]]

    def feature_width(self, a):
        return self.features[a].shape[1]

    # -- temporal queries --------------------------------------------------------

    def dynamic_degree(self, v, t):
        """Number of incident edges strictly before ``t``."""
        i = self.index(v)
        return int(_kernels.count_before(self.indptr, self.adj_time, np.atleast_1d(i), np.atleast_1d(t))[0])

    def degrees_at(self, idx, times):
        """Vectorised dynamic degree over dense indices."""
        idx = np.asarray(idx, dtype=np.int64)
        out = _kernels.count_before(self.indptr, self.adj_time, idx.ravel(),
                                    np.broadcast_to(np.asarray(times, dtype=np.int64), idx.shape).ravel())
        return out.reshape(idx.shape)

    def historical_neighbors(self, v, t):
        """Adjacency prefix of ``v`` with edge time < t: [(neighbor id, etype, time)]."""
        i = int(self.index(v))
        k = self.dynamic_degree(v, t)
        lo = self.indptr[i]
        return [(int(self.node_ids[self.adj_nbr[j]]), self.edge_types[self.adj_etype[j]], int(self.adj_time[j]))
                for j in range(lo, lo + k)]

    def candidates(self, a, t):
        """Dense indices of type-``a`` nodes existing strictly before ``t``."""
        births, members = self._pools[a]
        return members[: np.searchsorted(births, t, side="left")]

    # -- equality --------------------------------------------------------------

    def __eq__(self, other):
        if not isinstance(other, TemporalHinGraph):
            return NotImplemented
        if self.node_types != other.node_types or self.edge_types != other.edge_types:
            return False
        arrays = ("node_ids", "node_type", "indptr", "adj_nbr", "adj_etype", "adj_time", "birth")
        if not all(np.array_equal(getattr(self, k), getattr(other, k)) for k in arrays):
            return False
        return all(np.array_equal(self.features[a], other.features[a]) for a in self.features)

    __hash__ = None

    def node_records(self):
        for i, v in enumerate(self.node_ids):
            a = self.node_type[i]
            yield int(v), self.node_types[a], self.features[a][self.feature_row[i]].tolist()

    def edge_records(self):
        for s, d, r, t in zip(self.edge_src, self.edge_dst, self.edge_etype, self.edge_time):
            yield int(self.node_ids[s]), int(self.node_ids[d]), self.edge_types[r], int(t)


# -- ingestion ----------------------------------------------------------------


def _read_jsonl(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"malformed JSON: {exc.msg}", path, lineno) from None


def _as_int(value, what, path, lineno):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise IngestionError(f"{what} must be an integer, got {value!r}", path, lineno)
    if isinstance(value, float):
        if not math.isfinite(value) or value != int(value):
            raise IngestionError(f"{what} must be a finite integer, got {value!r}", path, lineno)
        value = int(value)
    return value


def ingest(nodes_file, edges_file, events_file, node_types=None, edge_types=None):
    """Load and validate the three JSONL files; returns ``(graph, events)``.

    ``node_types`` / ``edge_types`` optionally pin the allowed type names.
    """
    nodes, widths, ids = [], {}, set()
    for lineno, obj in _read_jsonl(nodes_file):
        try:
            vid, vtype, feat = obj["id"], obj["type"], obj["feature"]
        except (KeyError, TypeError):
            raise IngestionError("node record needs id, type, feature", nodes_file, lineno) from None
        vid = _as_int(vid, "node id", nodes_file, lineno)
        if not isinstance(vtype, str):
            raise IngestionError(f"node type must be a string, got {vtype!r}", nodes_file, lineno)
        if node_types is not None and vtype not in node_types:
            raise IngestionError(f"unknown node type {vtype!r}", nodes_file, lineno)
        if vid in ids:
            raise IngestionError(f"duplicate node id {vid}", nodes_file, lineno)
        if not isinstance(feat, list):
            raise IngestionError("feature must be a list", nodes_file, lineno)
        try:
            arr = np.asarray(feat, dtype=np.float64)
        except (TypeError, ValueError):
            raise IngestionError("feature must contain only reals", nodes_file, lineno) from None
        if arr.ndim != 1 or not np.all(np.isfinite(arr)):
            raise IngestionError("feature must be a flat list of finite reals", nodes_file, lineno)
        if widths.setdefault(vtype, arr.size) != arr.size:
            raise IngestionError(
                f"ragged features: type {vtype!r} has width {widths[vtype]}, this node has {arr.size}",
                nodes_file, lineno)
        ids.add(vid)
        nodes.append((vid, vtype, arr))

    edges, edge_count = [], {}
    for lineno, obj in _read_jsonl(edges_file):
        try:
            s, d, r, t = obj["src"], obj["dst"], obj["etype"], obj["time"]
        except (KeyError, TypeError):
            raise IngestionError("edge record needs src, dst, etype, time", edges_file, lineno) from None
        s = _as_int(s, "src", edges_file, lineno)
        d = _as_int(d, "dst", edges_file, lineno)
        t = _as_int(t, "time", edges_file, lineno)
        if not isinstance(r, str):
            raise IngestionError(f"edge type must be a string, got {r!r}", edges_file, lineno)
        if edge_types is not None and r not in edge_types:
            raise IngestionError(f"unknown edge type {r!r}", edges_file, lineno)
        for end in (s, d):
            if end not in ids:
                raise IngestionError(f"edge references missing node id {end}", edges_file, lineno)
        edges.append((s, d, r, t))
        key = (min(s, d), max(s, d), r, t)
        edge_count[key] = edge_count.get(key, 0) + 1

    known_etypes = {e[2] for e in edges}
    events = []
    for lineno, obj in _read_jsonl(events_file):
        try:
            anchor, members, ev_edges, t = obj["anchor"], obj["nodes"], obj["edges"], obj["time"]
        except (KeyError, TypeError):
            raise IngestionError("event record needs anchor, nodes, edges, time", events_file, lineno) from None
        anchor = _as_int(anchor, "anchor", events_file, lineno)
        t = _as_int(t, "time", events_file, lineno)
        members = [_as_int(v, "member node", events_file, lineno) for v in members]
        for v in [anchor, *members]:
            if v not in ids:
                raise IngestionError(f"event references missing node id {v}", events_file, lineno)
        allowed = set(members) | {anchor}
        parsed, need = [], {}
        for item in ev_edges:
            if not (isinstance(item, list) and len(item) == 3):
                raise IngestionError(f"event edge must be [src, dst, etype], got {item!r}", events_file, lineno)
            s = _as_int(item[0], "event edge src", events_file, lineno)
            d = _as_int(item[1], "event edge dst", events_file, lineno)
            r = item[2]
            if r not in known_etypes:
                raise IngestionError(f"unknown edge type {r!r}", events_file, lineno)
            if s not in allowed or d not in allowed:
                raise IngestionError(f"event edge ({s}, {d}) has an endpoint outside the event", events_file, lineno)
            key = (min(s, d), max(s, d), r, t)
            need[key] = need.get(key, 0) + 1
            parsed.append((s, d, r))
        for key, cnt in need.items():
            if edge_count.get(key, 0) < cnt:
                raise IngestionError(
                    f"event edge ({key[0]}, {key[1]}, {key[2]!r}) at time {t} not present in edges file",
                    events_file, lineno)
        events.append(EventRecord(anchor, tuple(members), tuple(parsed), t))

    try:
        graph = TemporalHinGraph(nodes, edges, events)
    except ContractError as exc:
        raise IngestionError(str(exc), nodes_file) from None
    return graph, events


def write_dataset(directory, node_records, edge_records, events):
    """Emit nodes.jsonl / edges.jsonl / events.jsonl; returns the three paths."""
    os.makedirs(directory, exist_ok=True)
    paths = tuple(os.path.join(directory, f) for f in ("nodes.jsonl", "edges.jsonl", "events.jsonl"))
    with open(paths[0], "w") as fh:
        for vid, vtype, feat in node_records:
            fh.write(json.dumps({"id": int(vid), "type": vtype, "feature": [float(x) for x in feat]}) + "\n")
    with open(paths[1], "w") as fh:
        for s, d, r, t in edge_records:
            fh.write(json.dumps({"src": int(s), "dst": int(d), "etype": r, "time": int(t)}) + "\n")
    with open(paths[2], "w") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_json()) + "\n")
    return paths


def emit(graph, events, directory):
    return write_dataset(directory, graph.node_records(), graph.edge_records(), events)


# -- splitting ----------------------------------------------------------------


@dataclass(frozen=True)
class TemporalSplit:
    train_events: list
    valid_events: list
    test_events: list
    t_train_end: int
    t_valid_end: int


def temporal_split(events, train_frac, valid_frac):
    """Cut time-sorted events at the fraction boundaries.

    An event whose time equals a boundary goes to the later split.
    """
    events = list(events)
    if not events:
        raise ContractError("temporal_split: no events")
    if not (train_frac > 0 and valid_frac > 0 and train_frac + valid_frac < 1):
        raise ContractError(f"temporal_split: invalid fractions ({train_frac}, {valid_frac})")
    events = sorted(events, key=lambda e: e.time)
    n = len(events)
    c1 = int(math.floor(n * train_frac + 1e-9))
    c2 = int(math.floor(n * (train_frac + valid_frac) + 1e-9))
    if c1 <= 0 or c2 <= c1 or c2 >= n:
        raise SplitError(f"temporal_split: {n} events cannot fill three splits")
    t1, t2 = events[c1].time, events[c2].time
    train = [e for e in events if e.time < t1]
    valid = [e for e in events if t1 <= e.time < t2]
    test = [e for e in events if e.time >= t2]
    if not train or not valid or not test:
        raise SplitError(
            f"temporal_split: degenerate boundary (t_train_end={t1}, t_valid_end={t2}) leaves a split empty")
    return TemporalSplit(train, valid, test, t1, t2)


def seen_nodes(events):
    """Node ids touched by ``events`` (anchors and members)."""
    out = set()
    for e in events:
        out.add(e.anchor)
        out.update(e.member_nodes)
    return out
