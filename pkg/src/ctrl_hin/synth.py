"""Synthetic temporal HINs with planted community structure.

Every event creates a new anchor node (think "paper published") and links it
to member nodes picked by slot. With probability ``1 - noise`` a member comes
from the anchor's community, otherwise from the whole type pool, so link
prediction has a known, tunable signal.
"""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import GenerationError
from .graph import EventRecord, write_dataset


def _default_member_types():
    return {"author": {"count": 400, "feature_dim": 16}, "venue": {"count": 16, "feature_dim": 16}}


def _default_slots():
    return [
        {"type": "author", "etype": "writes", "count": 3},
        {"type": "venue", "etype": "published_in", "count": 1},
        {"type": "paper", "etype": "cites", "count": 2},
    ]


@dataclass
class SynthConfig:
    anchor_type: str = "paper"
    anchor_feature_dim: int = 16
    member_types: dict = field(default_factory=_default_member_types)
    slots: list = field(default_factory=_default_slots)
    n_events: int = 2000
    t_start: int = 0
    t_end: int = 100_000
    communities: int = 4
    noise: float = 0.1
    jitter: float = 0.1
    seed: int = 0

    def validate(self):
        if not 0.0 <= self.noise <= 1.0:
            raise GenerationError(f"noise must lie in [0, 1], got {self.noise}")
        if self.communities < 1:
            raise GenerationError("communities must be >= 1")
        if self.n_events < 1:
            raise GenerationError("n_events must be >= 1")
        if self.t_end <= self.t_start:
            raise GenerationError("t_end must exceed t_start")
        if self.anchor_type in self.member_types:
            raise GenerationError(f"anchor type {self.anchor_type!r} must not be listed among member types")
        for name, spec in self.member_types.items():
            if int(spec["count"]) < 2:
                raise GenerationError(f"node type {name!r} needs at least 2 nodes, has {spec['count']}")
        etypes = set()
        for s in self.slots:
            if s["type"] != self.anchor_type and s["type"] not in self.member_types:
                raise GenerationError(f"slot needs node type {s['type']!r}, which has no nodes")
            etypes.add(s["etype"])
        node_types = {self.anchor_type, *self.member_types}
        if len(node_types) + len(etypes) <= 2:
            raise GenerationError("schema is not heterogeneous (|node types| + |edge types| <= 2)")

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise GenerationError(f"unknown synth config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)


@dataclass
class SynthDataset:
    nodes: list  # (id, type, feature)
    edges: list  # (src, dst, etype, time)
    events: list
    community: dict  # node id -> community

    def write(self, directory):
        return write_dataset(directory, self.nodes, self.edges, self.events)


def generate(config):
    config.validate()
    rng = np.random.default_rng(config.seed)
    k = config.communities
    centroids = {}

    def feature(width, c):
        if width == 0:
            return np.zeros(0)
        if width not in centroids:
            m = rng.normal(size=(k, width))
            centroids[width] = m / np.linalg.norm(m, axis=1, keepdims=True)
        return centroids[width][c] + config.jitter * rng.normal(size=width)

    nodes, community = [], {}
    pools = {}  # type -> (ids array, community array)
    next_id = 0
    for name in sorted(config.member_types):
        spec = config.member_types[name]
        count, width = int(spec["count"]), int(spec["feature_dim"])
        comm = rng.permutation(np.arange(count) % k)
        ids = np.arange(next_id, next_id + count)
        for vid, c in zip(ids, comm):
            nodes.append((int(vid), name, feature(width, int(c))))
            community[int(vid)] = int(c)
        pools[name] = (ids, comm)
        next_id += count

    times = np.sort(rng.uniform(config.t_start, config.t_end, size=config.n_events)).astype(np.int64)
    anchors, anchor_comm, anchor_time = [], [], []
    edges, events = [], []
    for t in times:
        t = int(t)
        c = int(rng.integers(k))
        aid = next_id
        next_id += 1
        nodes.append((aid, config.anchor_type, feature(config.anchor_feature_dim, c)))
        community[aid] = c
        members, ev_edges = [], []
        for slot in config.slots:
            if slot["type"] == config.anchor_type:
                n_prior = int(np.searchsorted(np.asarray(anchor_time, dtype=np.int64), t, side="left"))
                ids = np.asarray(anchors[:n_prior], dtype=np.int64)
                comm = np.asarray(anchor_comm[:n_prior], dtype=np.int64)
                if ids.size < 2:
                    continue  # negatives need an alternative that already exists
            else:
                ids, comm = pools[slot["type"]]
            own = ids[comm == c]
            for _ in range(int(slot["count"])):
                if rng.random() < config.noise:
                    v = int(ids[rng.integers(ids.size)])
                elif own.size:
                    v = int(own[rng.integers(own.size)])
                else:
                    continue
                members.append(v)
                ev_edges.append((aid, v, slot["etype"]))
                edges.append((aid, v, slot["etype"], t))
        events.append(EventRecord(aid, tuple(members), tuple(ev_edges), t))
        anchors.append(aid)
        anchor_comm.append(c)
        anchor_time.append(t)
    return SynthDataset(nodes, edges, events, community)


def within_community_fraction(dataset):
    """Share of event members that sit in their anchor's community."""
    hit = total = 0
    for ev in dataset.events:
        c = dataset.community[ev.anchor]
        for v in ev.member_nodes:
            total += 1
            hit += dataset.community[v] == c
    return hit / total if total else float("nan")
