"""Inductive temporal link prediction harness and binary metrics."""
import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractError, MetricError
from .model import build_plan, edge_head, forward
from .sampler import make_rng, sample_negative_edge
from .tensor import ops

EVAL_STREAM = 3


@dataclass(frozen=True)
class ScoredPair:
    score: float
    label: int

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise MetricError(f"non-finite score {self.score!r}")
        if self.label not in (0, 1):
            raise MetricError(f"label must be 0 or 1, got {self.label!r}")


@dataclass
class MetricsReport:
    accuracy: float
    average_precision: float
    f1: float
    auc: float
    n_pos: int
    n_neg: int
    n_inductive: int = 0
    inductive_fraction: float = 0.0

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _arrays(pairs):
    if isinstance(pairs, tuple) and len(pairs) == 2 and not isinstance(pairs[0], ScoredPair):
        scores, labels = pairs
    else:
        scores = [p.score for p in pairs]
        labels = [p.label for p in pairs]
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    if s.shape != y.shape:
        raise MetricError("scores and labels differ in length")
    if not np.all(np.isfinite(s)):
        raise MetricError("non-finite score")
    if np.any((y != 0) & (y != 1)):
        raise MetricError("labels must be 0 or 1")
    return s, y


def auc_score(scores, labels):
    """Mann-Whitney AUC: P(pos > neg) with ties counted one half."""
    s, y = _arrays((scores, labels))
    pos, neg = s[y == 1], np.sort(s[y == 0])
    if pos.size == 0 or neg.size == 0:
        raise MetricError("AUC needs at least one positive and one negative")
    below = np.searchsorted(neg, pos, side="left")
    tied = np.searchsorted(neg, pos, side="right") - below
    # integer numerator (doubled) keeps the sum exact
    twice = int(2 * below.sum() + tied.sum())
    return twice / (2.0 * pos.size * neg.size)


def average_precision(scores, labels):
    """Step-wise precision sweep, descending score, ties in input order."""
    s, y = _arrays((scores, labels))
    n_pos = int(y.sum())
    if n_pos == 0:
        raise MetricError("AP needs at least one positive")
    order = np.argsort(-s, kind="stable")
    ys = y[order]
    tp = np.cumsum(ys)
    precision = tp / np.arange(1, ys.size + 1)
    return float(precision[ys == 1].sum() / n_pos)


def compute_metrics(pairs, threshold=0.5):
    """Accuracy, AP, F1 and AUC over ``pairs`` (ScoredPairs or a (scores, labels) tuple)."""
    s, y = _arrays(pairs)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricError(f"need both classes, got {n_pos} positive and {n_neg} negative")
    pred = s >= threshold
    pos = y == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricsReport(
        accuracy=float(np.mean(pred == pos)),
        average_precision=average_precision(s, y),
        f1=float(f1),
        auc=auc_score(s, y),
        n_pos=n_pos,
        n_neg=n_neg,
    )


def score_events(graph, events, params, config, seed, chunk=64):
    """Score every member edge of ``events`` and one seeded negative per edge.

    Returns a list of dicts (event index, src, dst, neg_dst, time, pos, neg).
    Each event draws from its own stream keyed by its position, so scores do
    not depend on chunking.
    """
    rows = []
    for start in range(0, len(events), chunk):
        part = events[start:start + chunk]
        roots, root_t, owner, rngs, edges = [], [], [], [], []
        for k, ev in enumerate(part):
            rng = make_rng(seed, EVAL_STREAM, start + k)
            rngs.append(rng)
            slot = {}

            def root(v, ev=ev, k=k, slot=slot):
                if v not in slot:
                    slot[v] = len(roots)
                    roots.append(v)
                    root_t.append(ev.time)
                    owner.append(k)
                return slot[v]

            for s, d, r in ev.member_edges:
                ns = sample_negative_edge(graph, (s, d, r, ev.time), rng)
                edges.append((start + k, s, d, ns[1], ev.time, root(s), root(d), root(ns[1])))
        if not roots:
            continue
        plan = build_plan(graph, graph.index(roots), root_t, config, owner=owner, rngs=rngs)
        h = forward(graph, params, config, plan)
        e = np.array([x[5:] for x in edges], dtype=np.int64).reshape(-1, 3)
        hs = ops.take(h, e[:, 0])
        p_pos = edge_head(params, hs, ops.take(h, e[:, 1])).data[:, 0]
        p_neg = edge_head(params, hs, ops.take(h, e[:, 2])).data[:, 0]
        for x, a, b in zip(edges, p_pos, p_neg):
            rows.append({"event": x[0], "src": x[1], "dst": x[2], "neg_dst": x[3], "time": x[4],
                         "pos_score": float(a), "neg_score": float(b)})
    return rows


def evaluate_inductive(graph, events, params, config, seed, seen=None, threshold=0.5, return_rows=False):
    """Metrics over positive event edges vs. one negative each.

    ``seen`` is the training-seen node-id set; positives with an endpoint
    outside it count as inductive.
    """
    events = list(events)
    if not events:
        raise ContractError("evaluate_inductive: no events")
    rows = score_events(graph, events, params, config, seed)
    scores = [r["pos_score"] for r in rows] + [r["neg_score"] for r in rows]
    labels = [1] * len(rows) + [0] * len(rows)
    report = compute_metrics((scores, labels), threshold)
    if seen is not None:
        ind = sum(1 for r in rows if r["src"] not in seen or r["dst"] not in seen)
        report.n_inductive = ind
        report.inductive_fraction = ind / len(rows) if rows else 0.0
    return (report, rows) if return_rows else report


def write_scores_csv(path, rows):
    fields = ["event", "time", "src", "dst", "neg_dst", "pos_score", "neg_score"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in fields})
