"""Event-based training: occurrence and topology losses, batching, fitting."""
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, NumericError
from .evaluation import evaluate_inductive
from .graph import seen_nodes
from .model import HAWKES_MODES, build_plan, edge_head, event_head, forward
from .sampler import make_rng, sample_negative_edge, sample_negative_event
from .tensor import AdamState, Tape, Tensor, adam_step, backward, ops

log = logging.getLogger(__name__)

SHUFFLE_STREAM = 1
TRAIN_STREAM = 2


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 1024
    epochs: int = 5
    seed: int = 0
    use_event_loss: bool = True
    use_centrality: bool = True
    hawkes_mode: str = "edge_based"
    clip_eps: float = 1e-7
    patience: int = 5
    micro_batch: int = 32  # events per forward/backward chunk; memory knob only

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1 or self.micro_batch < 1:
            raise ConfigError("batch_size and micro_batch must be >= 1")
        if not 0 < self.clip_eps < 0.5:
            raise ConfigError(f"clip_eps must lie in (0, 0.5), got {self.clip_eps}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.hawkes_mode not in HAWKES_MODES:
            raise ConfigError(f"hawkes_mode must be one of {HAWKES_MODES}")


@dataclass
class TrainLogRecord:
    epoch: int
    event_loss: float
    topo_loss: float
    valid: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


VARIANTS = {
    "full": {},
    "no-event-loss": {"use_event_loss": False},
    "no-centrality": {"use_event_loss": False, "use_centrality": False},
    "single-delta": {"use_event_loss": False, "use_centrality": False, "hawkes_mode": "single_delta"},
}


def variant_flags(name):
    """Flag overrides for an ablation variant; variants nest cumulatively."""
    try:
        return dict(VARIANTS[name])
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None


# -- losses ---------------------------------------------------------------------


def _check_finite(*values):
    for v in values:
        if not np.all(np.isfinite(np.asarray(getattr(v, "data", v), dtype=np.float64))):
            raise NumericError("non-finite probability")


def _pair_loss(p_pos, p_neg, eps):
    """-log(p_pos) - log(1 - p_neg) elementwise on clamped tensors."""
    lp = ops.log(ops.clamp(p_pos, eps, 1.0 - eps))
    q = ops.clamp(p_neg, eps, 1.0 - eps)
    ln = ops.log(ops.sub(Tensor(np.ones(q.shape)), q))
    return ops.scale(ops.add(lp, ln), -1.0)


def event_occurrence_loss(p_pos, p_neg, clip_eps=1e-7):
    _check_finite(p_pos, p_neg)
    return float(_pair_loss(Tensor(p_pos), Tensor(p_neg), clip_eps).data)


def topo_loss(edge_probs, clip_eps=1e-7):
    """Mean over an event's edges of the positive/negative pair loss."""
    edge_probs = list(edge_probs)
    if not edge_probs:
        raise ContractError("topo_loss: empty edge list")
    arr = np.asarray(edge_probs, dtype=np.float64).reshape(-1, 2)
    _check_finite(arr)
    return float(ops.mean(_pair_loss(Tensor(arr[:, 0]), Tensor(arr[:, 1]), clip_eps)).data)


# -- batches ----------------------------------------------------------------------


@dataclass
class PreparedBatch:
    events: list
    plan: object
    pos_avg: np.ndarray  # (E, R) row-averaging matrix for positive events
    neg_avg: np.ndarray  # (E, R) for negative events, or None
    edge_rows: np.ndarray  # (M, 3) root rows of src, dst, negative dst
    edge_avg: np.ndarray  # (E, M) per-event mean over member edges


def prepare_batch(graph, events, model_cfg, seed, keys, with_event_loss=True):
    """Negative sampling plus the sampling plan for a list of events.

    ``keys[i]`` selects the random stream of ``events[i]``; the same key gives
    the same negatives and neighbour samples regardless of batch company.
    """
    roots, root_t, owner, rngs = [], [], [], []
    pos_sets, neg_sets, edges, edge_owner = [], [], [], []
    for k, (ev, key) in enumerate(zip(events, keys)):
        rng = make_rng(seed, TRAIN_STREAM, *np.atleast_1d(key))
        rngs.append(rng)
        slot = {}

        def root(v, ev=ev, k=k, slot=slot):
            if v not in slot:
                slot[v] = len(roots)
                roots.append(v)
                root_t.append(ev.time)
                owner.append(k)
            return slot[v]

        pos_sets.append([root(v) for v in ev.nodes])
        if with_event_loss:
            neg = sample_negative_event(graph, ev, rng)
            neg_sets.append([root(v) for v in neg.nodes])
        for s, d, r in ev.member_edges:
            ns = sample_negative_edge(graph, (s, d, r, ev.time), rng)
            edges.append((root(s), root(d), root(ns[1])))
            edge_owner.append(k)
    plan = build_plan(graph, graph.index(roots), root_t, model_cfg, owner=owner, rngs=rngs)

    n_ev, n_root = len(events), len(roots)

    def averager(sets):
        a = np.zeros((n_ev, n_root))
        for e, rows in enumerate(sets):
            a[e, rows] = 1.0 / len(rows)
        return a

    edge_avg = np.zeros((n_ev, len(edges)))
    counts = np.bincount(np.asarray(edge_owner, dtype=np.int64), minlength=n_ev) if edges else np.zeros(n_ev)
    for m, e in enumerate(edge_owner):
        edge_avg[e, m] = 1.0 / counts[e]
    return PreparedBatch(
        events=list(events), plan=plan, pos_avg=averager(pos_sets),
        neg_avg=averager(neg_sets) if with_event_loss else None,
        edge_rows=np.asarray(edges, dtype=np.int64).reshape(-1, 3), edge_avg=edge_avg,
    )


def batch_objective(graph, params, model_cfg, batch, clip_eps=1e-7, use_event_loss=True):
    """Summed objective over the batch plus per-event loss arrays.

    Returns ``(total, occur, topo)``; ``occur``/``topo`` are numpy arrays of
    length E (``occur`` is zero when the event loss is off).
    """
    h = forward(graph, params, model_cfg, batch.plan)
    n_ev = len(batch.events)
    parts = []
    occur = np.zeros(n_ev)
    if use_event_loss:
        p_pos = event_head(params, ops.matmul(Tensor(batch.pos_avg), h))
        p_neg = event_head(params, ops.matmul(Tensor(batch.neg_avg), h))
        lo = _pair_loss(p_pos, p_neg, clip_eps)
        occur = lo.data[:, 0].copy()
        parts.append(ops.sum(lo))
    topo = np.zeros(n_ev)
    if batch.edge_rows.shape[0]:
        src = ops.take(h, batch.edge_rows[:, 0])
        pp = edge_head(params, src, ops.take(h, batch.edge_rows[:, 1]))
        pn = edge_head(params, src, ops.take(h, batch.edge_rows[:, 2]))
        per_edge = _pair_loss(pp, pn, clip_eps)
        lt = ops.matmul(Tensor(batch.edge_avg), per_edge)
        topo = lt.data[:, 0].copy()
        parts.append(ops.sum(lt))
    total = parts[0]
    for p in parts[1:]:
        total = ops.add(total, p)
    return total, occur, topo


def zero_grads(params):
    for p in params.values():
        p.grad = None


def accumulate_batch(graph, params, model_cfg, train_cfg, events, keys):
    """Forward/backward over ``events`` in micro-batches; gradients accumulate.

    Returns per-event (occur, topo) loss arrays.
    """
    occ_all, topo_all = [], []
    mb = train_cfg.micro_batch
    for s in range(0, len(events), mb):
        evs, ks = events[s:s + mb], keys[s:s + mb]
        batch = prepare_batch(graph, evs, model_cfg, train_cfg.seed, ks, train_cfg.use_event_loss)
        with Tape() as tape:
            total, occ, topo = batch_objective(graph, params, model_cfg, batch, train_cfg.clip_eps,
                                               train_cfg.use_event_loss)
        per_event = occ + topo
        bad = np.flatnonzero(~np.isfinite(per_event))
        if bad.size:
            ev = evs[bad[0]]
            raise NumericError(f"non-finite loss for event anchored at {ev.anchor} (t={ev.time})")
        backward(total, tape)
        occ_all.append(occ)
        topo_all.append(topo)
    return np.concatenate(occ_all), np.concatenate(topo_all)


def train_step(graph, params, model_cfg, train_cfg, events, keys, adam):
    """One optimisation step over a batch of training events; returns the summed loss."""
    if not events:
        raise ContractError("train_step: empty batch")
    zero_grads(params)
    occ, topo = accumulate_batch(graph, params, model_cfg, train_cfg, events, keys)
    adam_step(params, adam)
    zero_grads(params)
    return float(occ.sum() + topo.sum()), occ, topo


def check_flags(model_cfg, train_cfg):
    if model_cfg.use_centrality != train_cfg.use_centrality or model_cfg.hawkes_mode != train_cfg.hawkes_mode:
        raise ConfigError("model and training configs disagree on variant flags")


def snapshot(params):
    return {k: p.data.copy() for k, p in params.items()}


def restore(params, snap):
    for k, v in snap.items():
        params[k].data[...] = v


def fit(graph, split, params, model_cfg, train_cfg, log_path=None, eval_seed=None, progress=None):
    """Train on ``split.train_events``; keep the parameters with the best
    validation AUC. Returns ``(params, records)``."""
    check_flags(model_cfg, train_cfg)
    records = []
    if train_cfg.epochs == 0:
        return params, records
    train = sorted(split.train_events, key=lambda e: e.time)
    seen = seen_nodes(train)
    eval_seed = train_cfg.seed if eval_seed is None else eval_seed
    adam = AdamState(learning_rate=train_cfg.learning_rate)
    best_auc, best, stale = -math.inf, snapshot(params), 0
    fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, train_cfg.epochs + 1):
            t0 = time.perf_counter()
            order = make_rng(train_cfg.seed, SHUFFLE_STREAM, epoch).permutation(len(train))
            occ_sum = topo_sum = 0.0
            for s in range(0, len(order), train_cfg.batch_size):
                idx = order[s:s + train_cfg.batch_size]
                evs = [train[i] for i in idx]
                keys = [(epoch, int(i)) for i in idx]
                _, occ, topo = train_step(graph, params, model_cfg, train_cfg, evs, keys, adam)
                occ_sum += occ.sum()
                topo_sum += topo.sum()
            report = evaluate_inductive(graph, split.valid_events, params, model_cfg, eval_seed, seen)
            rec = TrainLogRecord(epoch, occ_sum / len(train), topo_sum / len(train), report.to_dict(),
                                 time.perf_counter() - t0)
            records.append(rec)
            if fh:
                fh.write(rec.to_json() + "\n")
                fh.flush()
            log.info("epoch %d event_loss=%.4f topo_loss=%.4f valid_auc=%.4f (%.1fs)",
                     epoch, rec.event_loss, rec.topo_loss, report.auc, rec.seconds)
            if progress:
                progress(rec)
            if report.auc > best_auc:
                best_auc, best, stale = report.auc, snapshot(params), 0
            else:
                stale += 1
                if stale >= train_cfg.patience:
                    break
    finally:
        if fh:
            fh.close()
    restore(params, best)
    return params, records
