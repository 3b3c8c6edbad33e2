"""The CTRL network: degree-encoded inputs, heterogeneous message passing,
attention / edge-based Hawkes / dynamic-centrality weighting and the two
prediction heads.

Computation is split in two phases. :func:`build_plan` does all sampling and
index bookkeeping for a set of root queries ``(node, time)``; :func:`forward`
is a deterministic function of a plan and the parameters. Holding the plan
fixed is what makes finite-difference checks and replay possible.
"""
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CausalityError, ConfigError, ContractError
from .sampler import draw_neighbors, make_rng
from .tensor import Tensor, load_checkpoint, ops, save_checkpoint

HAWKES_MODES = ("edge_based", "single_delta")


@dataclass
class ModelConfig:
    d: int = 128
    n_layers: int = 2
    n_neighbors: int = 10
    n_heads: int = 2
    degree_buckets: int = 16
    use_centrality: bool = True
    hawkes_mode: str = "edge_based"

    def __post_init__(self):
        if self.d < 1 or self.n_layers < 1 or self.n_neighbors < 1 or self.n_heads < 1:
            raise ConfigError(f"model sizes must be positive: {self}")
        if self.d % self.n_heads:
            raise ConfigError(f"d={self.d} is not divisible by n_heads={self.n_heads}")
        if self.degree_buckets < 1:
            raise ConfigError("degree_buckets must be >= 1")
        if self.hawkes_mode not in HAWKES_MODES:
            raise ConfigError(f"hawkes_mode must be one of {HAWKES_MODES}, got {self.hawkes_mode!r}")

    @property
    def head_dim(self):
        return self.d // self.n_heads

    def to_dict(self):
        return asdict(self)


@dataclass
class Schema:
    """Type names and raw feature widths the parameters are built for."""

    node_types: list
    edge_types: list
    feature_widths: dict = field(default_factory=dict)

    @classmethod
    def from_graph(cls, graph):
        return cls(list(graph.node_types), list(graph.edge_types),
                   {a: graph.feature_width(i) for i, a in enumerate(graph.node_types)})

    def to_dict(self):
        return asdict(self)


# -- parameters ----------------------------------------------------------------


def _uniform(rng, fan_in, shape):
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def init_params(schema, config, seed=0):
    """Fresh parameter dict (name -> Tensor). Weights and biases are drawn
    uniform in +-1/sqrt(fan_in); alpha logits and beta scalars start at 0."""
    rng = make_rng(seed, 0x1A17)
    d = config.d
    p = {}

    def linear(prefix, din, dout):
        p[f"{prefix}/weight"] = _uniform(rng, din, (din, dout))
        p[f"{prefix}/bias"] = _uniform(rng, din, (dout,))

    for a in schema.node_types:
        linear(f"proj/{a}", int(schema.feature_widths.get(a, 0)), d)
    if config.use_centrality:
        p["degree_table"] = _uniform(rng, d, (config.degree_buckets, d))
        for a in schema.node_types:
            p[f"beta/{a}"] = np.zeros(())
    p["alpha_logits"] = np.zeros(3 if config.use_centrality else 2)
    for l in range(1, config.n_layers + 1):
        for a in schema.node_types:
            for mod in ("ffn_v", "ffn_q", "ffn_k", "adapt"):
                linear(f"layer{l}/{mod}/{a}", d, d)
        for r in schema.edge_types:
            p[f"layer{l}/w_msg/{r}"] = _uniform(rng, d, (d, d))
            p[f"layer{l}/w_key/{r}"] = _uniform(rng, d, (d, d))
        if config.hawkes_mode == "edge_based":
            linear(f"layer{l}/decay_mlp/hidden", 2 * d, d)
            linear(f"layer{l}/decay_mlp/out", d, 1)
    if config.hawkes_mode == "single_delta":
        p["decay_delta"] = np.ones(())
    linear("mlp_event/hidden", d, d)
    linear("mlp_event/out", d, 1)
    linear("mlp_edge/hidden", 2 * d, d)
    linear("mlp_edge/out", d, 1)
    return {k: Tensor(v, requires_grad=True, name=k) for k, v in p.items()}


def count_parameters(params):
    return int(sum(t.size for t in params.values()))


def _get(params, name):
    try:
        return params[name]
    except KeyError:
        raise ConfigError(f"missing parameter {name!r}") from None


def degree_bucket(deg, buckets):
    """min(floor(log2(D + 1)), B - 1), computed on integers."""
    x = np.asarray(deg, dtype=np.int64) + 1
    k = np.zeros(x.shape, dtype=np.int64)
    while np.any(x > 1):
        k += x > 1
        x = x >> 1
    return np.minimum(k, buckets - 1)


# -- sampling plan ---------------------------------------------------------------


@dataclass
class LayerPlan:
    """Index data for one CTRL layer: ``n`` targets, each with N neighbour slots.

    Targets are rows ``[0, n)`` of the layer below; neighbour slot ``(i, j)``
    is row ``n + i*N + j``.
    """

    n: int
    tgt_type: np.ndarray  # (n,)
    nbr_type: np.ndarray  # (n*N,)
    etype: np.ndarray  # (n*N,)
    dt: np.ndarray  # (n, N) normalised elapsed time
    nbr_deg: np.ndarray  # (n, N) neighbour degree at the target's time
    mask: np.ndarray  # (n,) 1.0 where the target has history


@dataclass
class Plan:
    nodes: list  # per level 0..L: dense node indices
    times: list  # per level 0..L
    layers: list  # LayerPlan for layers 1..L
    base_deg: np.ndarray  # dynamic degree of level-0 queries

    @property
    def n_roots(self):
        return self.nodes[-1].size


def build_plan(graph, nodes, times, config, rng=None, owner=None, rngs=None):
    """Sample the L-hop temporal expansion of root queries ``(nodes, times)``.

    ``nodes`` are dense indices. Uniform draws come from ``rng``; or, when
    ``owner`` (group id per root) and ``rngs`` (one generator per group) are
    given, each group draws from its own stream so a group's samples do not
    depend on what else is in the batch.
    """
    n_nb = config.n_neighbors
    nodes = np.asarray(nodes, dtype=np.int64).ravel()
    times = np.asarray(times, dtype=np.int64).ravel()
    if owner is not None:
        owner = np.asarray(owner, dtype=np.int64).ravel()
    span = float(graph.time_span)
    lv_nodes, lv_times, layers = [nodes], [times], []
    cur_nodes, cur_times, cur_owner = nodes, times, owner
    for _ in range(config.n_layers):
        n = cur_nodes.size
        if owner is None:
            u = rng.random((n, n_nb))
        else:
            u = np.empty((n, n_nb))
            for g in np.unique(cur_owner):
                sel = np.flatnonzero(cur_owner == g)
                u[sel] = rngs[g].random((sel.size, n_nb))
        pos, counts = draw_neighbors(graph, cur_nodes, cur_times, n_nb, u)
        has = counts > 0
        safe = np.where(pos >= 0, pos, 0)
        nbr = np.where(has[:, None], graph.adj_nbr[safe], cur_nodes[:, None])
        etime = np.where(has[:, None], graph.adj_time[safe], cur_times[:, None])
        ety = np.where(has[:, None], graph.adj_etype[safe], 0)
        if np.any(etime[has] >= cur_times[has, None]):
            raise CausalityError("sampled neighbour does not precede its target")
        deg = graph.degrees_at(nbr, np.broadcast_to(cur_times[:, None], nbr.shape))
        layers.append(LayerPlan(
            n=n,
            tgt_type=graph.node_type[cur_nodes],
            nbr_type=graph.node_type[nbr].ravel(),
            etype=ety.ravel(),
            dt=(cur_times[:, None] - etime) / span,
            nbr_deg=deg.astype(np.float64),
            mask=has.astype(np.float64),
        ))
        cur_nodes = np.concatenate([cur_nodes, nbr.ravel()])
        cur_times = np.concatenate([cur_times, etime.ravel()])
        if owner is not None:
            cur_owner = np.concatenate([cur_owner, np.repeat(cur_owner, n_nb)])
        lv_nodes.append(cur_nodes)
        lv_times.append(cur_times)
    lv_nodes.reverse()
    lv_times.reverse()
    layers.reverse()
    base_deg = graph.degrees_at(lv_nodes[0], lv_times[0])
    return Plan(lv_nodes, lv_times, layers, base_deg)


# -- forward pieces --------------------------------------------------------------


def _groups(types, names):
    out = []
    for k, name in enumerate(names):
        idx = np.flatnonzero(types == k)
        if idx.size:
            out.append((idx, name))
    return out


def _typed(params, x, types, names, module, bias=True):
    groups = _groups(types, names)
    ws = [_get(params, f"{module}/{name}/weight" if bias else f"{module}/{name}") for _, name in groups]
    bs = [_get(params, f"{module}/{name}/bias") for _, name in groups] if bias else None
    return ops.typed_linear(x, [g for g, _ in groups], ws, bs)


def _mlp(params, prefix, x):
    h = ops.relu(ops.add_bias(ops.matmul(x, _get(params, f"{prefix}/hidden/weight")),
                              _get(params, f"{prefix}/hidden/bias")))
    return ops.add_bias(ops.matmul(h, _get(params, f"{prefix}/out/weight")), _get(params, f"{prefix}/out/bias"))


def input_embeddings(graph, params, config, nodes, degrees):
    """Layer-0 states: per-type projected raw features plus degree embedding."""
    nodes = np.asarray(nodes, dtype=np.int64)
    types = graph.node_type[nodes]
    parts, order = [], []
    for a, name in enumerate(graph.node_types):
        idx = np.flatnonzero(types == a)
        if not idx.size:
            continue
        w = _get(params, f"proj/{name}/weight")
        x = graph.features[a][graph.feature_row[nodes[idx]]]
        if w.shape[0] != x.shape[1]:
            raise ContractError(f"projector for {name!r} expects width {w.shape[0]}, features have {x.shape[1]}")
        parts.append(ops.add_bias(ops.matmul(Tensor(x), w), _get(params, f"proj/{name}/bias")))
        order.append(idx)
    perm = np.concatenate(order)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    h = ops.take(ops.concat(parts, axis=0), inv) if len(parts) > 1 else ops.take(parts[0], inv)
    if config.use_centrality:
        z = ops.take(_get(params, "degree_table"), degree_bucket(degrees, config.degree_buckets))
        h = ops.add(h, z)
    return h


def messages(params, layer, hn, lp, graph):
    """FFN^V by neighbour type, then W^msg by edge type: (n*N, d)."""
    x = _typed(params, hn, lp.nbr_type, graph.node_types, f"layer{layer}/ffn_v")
    return _typed(params, x, lp.etype, graph.edge_types, f"layer{layer}/w_msg", bias=False)


def queries_keys(params, layer, ht, hn, lp, graph):
    q = _typed(params, ht, lp.tgt_type, graph.node_types, f"layer{layer}/ffn_q")
    k = _typed(params, hn, lp.nbr_type, graph.node_types, f"layer{layer}/ffn_k")
    k = _typed(params, k, lp.etype, graph.edge_types, f"layer{layer}/w_key", bias=False)
    return q, k


def attention_weights(q, k, n, n_nb, n_heads):
    """Per-head scaled dot-product softmax over neighbours: (n, H, N)."""
    d = q.shape[1]
    if d % n_heads:
        raise ConfigError(f"d={d} is not divisible by n_heads={n_heads}")
    dh = d // n_heads
    qh = ops.reshape(q, (n, n_heads, 1, dh))
    kh = ops.transpose(ops.reshape(k, (n, n_nb, n_heads, dh)), (0, 2, 3, 1))
    scores = ops.scale(ops.bmm(qh, kh), 1.0 / math.sqrt(dh))
    return ops.reshape(ops.softmax(scores, axis=-1), (n, n_heads, n_nb))


def decay_rates(params, config, layer, q, k, n, n_nb):
    """Non-negative decay rate per (target, neighbour): (n, N)."""
    if config.hawkes_mode == "single_delta":
        return ops.broadcast_to(ops.relu(_get(params, "decay_delta")), (n, n_nb))
    qrep = ops.take(q, np.repeat(np.arange(n), n_nb))
    z = _mlp(params, f"layer{layer}/decay_mlp", ops.concat([qrep, k], axis=-1))
    return ops.relu(ops.reshape(z, (n, n_nb)))


def hawkes_weights(delta, dt):
    """softmax over neighbours of exp(-delta * dt)."""
    dt = np.asarray(dt, dtype=np.float64)
    if np.any(dt < 0):
        raise CausalityError("negative elapsed time: neighbour edge after target time")
    kappa = ops.exp(ops.mul_const(delta, -dt))
    return ops.softmax(kappa, axis=-1)


def centrality_weights(params, node_types, nbr_type, nbr_deg):
    """softmax over neighbours of beta_type * degree: (n, N)."""
    beta = ops.stack([_get(params, f"beta/{a}") for a in node_types])
    shape = np.shape(nbr_deg)
    b = ops.reshape(ops.take(beta, np.asarray(nbr_type).ravel()), shape)
    return ops.softmax(ops.mul_const(b, nbr_deg), axis=-1)


def mixing_weights(params):
    return ops.softmax(_get(params, "alpha_logits"), axis=-1)


def combine_weights(alpha, attn, lam, omega):
    """alpha_1*attn + alpha_2*lambda (+ alpha_3*omega), per head: (n, H, N)."""
    n, n_heads, n_nb = attn.shape
    factors = [attn, ops.broadcast_to(ops.reshape(lam, (n, 1, n_nb)), (n, n_heads, n_nb))]
    if omega is not None:
        factors.append(ops.broadcast_to(ops.reshape(omega, (n, 1, n_nb)), (n, n_heads, n_nb)))
    stacked = ops.reshape(ops.stack(factors), (len(factors), n * n_heads * n_nb))
    if alpha.shape[0] != len(factors):
        raise ConfigError(f"alpha has {alpha.shape[0]} entries, expected {len(factors)}")
    w = ops.matmul(ops.reshape(alpha, (1, len(factors))), stacked)
    return ops.reshape(w, (n, n_heads, n_nb))


def layer_forward(graph, params, config, layer, h_prev, lp, trace=None):
    """One CTRL layer over all targets of ``lp``; ``h_prev`` holds the layer
    below (targets first, then neighbour slots)."""
    n, n_nb, n_heads = lp.n, config.n_neighbors, config.n_heads
    dh = config.head_dim
    ht = ops.rows(h_prev, 0, n)
    hn = ops.rows(h_prev, n, n + n * n_nb)
    msg = messages(params, layer, hn, lp, graph)
    q, k = queries_keys(params, layer, ht, hn, lp, graph)
    attn = attention_weights(q, k, n, n_nb, n_heads)
    delta = decay_rates(params, config, layer, q, k, n, n_nb)
    lam = hawkes_weights(delta, lp.dt)
    omega = centrality_weights(params, graph.node_types, lp.nbr_type, lp.nbr_deg) if config.use_centrality else None
    alpha = mixing_weights(params)
    w = combine_weights(alpha, attn, lam, omega)
    w = ops.mul_const(w, np.broadcast_to(lp.mask[:, None, None], w.shape))
    m = ops.transpose(ops.reshape(msg, (n, n_nb, n_heads, dh)), (0, 2, 1, 3))
    agg = ops.reshape(ops.bmm(ops.reshape(w, (n, n_heads, 1, n_nb)), m), (n, config.d))
    adapted = _typed(params, agg, lp.tgt_type, graph.node_types, f"layer{layer}/adapt")
    h = ops.add(ht, adapted)
    if trace is not None:
        trace.append({"attn": attn.data, "lambda": lam.data, "omega": None if omega is None else omega.data,
                      "delta": delta.data, "alpha": alpha.data, "combined": w.data, "messages": msg.data,
                      "aggregated": agg.data})
    return h


def forward(graph, params, config, plan, trace=None):
    """Final-layer states of the plan's roots: Tensor (n_roots, d)."""
    h = input_embeddings(graph, params, config, plan.nodes[0], plan.base_deg)
    for l, lp in enumerate(plan.layers, start=1):
        h = layer_forward(graph, params, config, l, h, lp, trace)
    return h


def event_head(params, h_events):
    return ops.sigmoid(_mlp(params, "mlp_event", h_events))


def edge_head(params, h_src, h_dst):
    return ops.sigmoid(_mlp(params, "mlp_edge", ops.concat([h_src, h_dst], axis=-1)))


# -- single-query convenience ------------------------------------------------------


class CtrlModel:
    """Graph, parameters and configuration bundled for per-query use."""

    def __init__(self, graph, params, config):
        self.graph = graph
        self.params = params
        self.config = config

    def input_embedding(self, v, t):
        i = np.atleast_1d(self.graph.index(v))
        deg = self.graph.degrees_at(i, np.atleast_1d(t))
        return input_embeddings(self.graph, self.params, self.config, i, deg).data[0]

    def _encode(self, ids, t, rng):
        idx = np.atleast_1d(self.graph.index(ids))
        plan = build_plan(self.graph, idx, np.full(idx.size, t), self.config, rng=rng)
        return forward(self.graph, self.params, self.config, plan)

    def encode_node(self, v, t, rng):
        return self._encode([v], t, rng).data[0]

    def event_probability(self, event, rng):
        nodes = event.nodes
        if not nodes:
            raise ContractError("event has no nodes")
        h = self._encode(nodes, event.time, rng)
        hg = ops.mean(h, axis=0)
        return float(event_head(self.params, ops.reshape(hg, (1, -1))).data[0, 0])

    def edge_probability(self, vi, vj, t, rng):
        h = self._encode([vi, vj], t, rng)
        p = edge_head(self.params, ops.rows(h, 0, 1), ops.rows(h, 1, 2))
        return float(p.data[0, 0])


# -- persistence -------------------------------------------------------------------


def save_model(path, params, config, schema, extra=None):
    meta = {"model": config.to_dict(), "schema": schema.to_dict()}
    if extra:
        meta.update(extra)
    save_checkpoint(path, params, meta)


def load_model(path):
    """Returns ``(params, config, schema, meta)``."""
    arrays, meta = load_checkpoint(path)
    try:
        config = ModelConfig(**meta["model"])
        schema = Schema(**meta["schema"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"checkpoint {path!r} lacks model metadata: {exc}") from None
    params = {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()}
    return params, config, schema, meta
