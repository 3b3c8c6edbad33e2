"""Naive per-node reimplementation of the CTRL forward pass.

Written with plain loops over numpy vectors and its own softmax so it shares
no code path with ``ctrl_hin.model`` beyond reading the plan and parameters.
"""
import math

import numpy as np


def softmax(v):
    v = np.asarray(v, dtype=float)
    e = np.exp(v - v.max())
    return e / e.sum()


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def P(params, name):
    return params[name].data


def bucket(deg, buckets):
    return min((int(deg) + 1).bit_length() - 1, buckets - 1)


def input_state(graph, params, cfg, v, deg):
    a = graph.node_type[v]
    name = graph.node_types[a]
    x = graph.features[a][graph.feature_row[v]]
    h = x @ P(params, f"proj/{name}/weight") + P(params, f"proj/{name}/bias")
    if cfg.use_centrality:
        h = h + P(params, "degree_table")[bucket(deg, cfg.degree_buckets)]
    return h


def lin(params, prefix, x):
    return x @ P(params, prefix + "/weight") + P(params, prefix + "/bias")


def layer_weights(graph, params, cfg, layer, h_t, tgt_type, nbr_h, nbr_types, etypes, dts, degs):
    """Returns (messages, attn[H][N], lam[N], omega[N] or None, alpha)."""
    nt, et = graph.node_types, graph.edge_types
    n = len(nbr_h)
    heads, dh = cfg.n_heads, cfg.d // cfg.n_heads
    msgs, keys = [], []
    for i in range(n):
        ti, ei = nt[nbr_types[i]], et[etypes[i]]
        msgs.append(lin(params, f"layer{layer}/ffn_v/{ti}", nbr_h[i]) @ P(params, f"layer{layer}/w_msg/{ei}"))
        keys.append(lin(params, f"layer{layer}/ffn_k/{ti}", nbr_h[i]) @ P(params, f"layer{layer}/w_key/{ei}"))
    q = lin(params, f"layer{layer}/ffn_q/{nt[tgt_type]}", h_t)
    attn = []
    for hd in range(heads):
        sl = slice(hd * dh, (hd + 1) * dh)
        attn.append(softmax([float(q[sl] @ keys[i][sl]) / math.sqrt(dh) for i in range(n)]))
    deltas = []
    for i in range(n):
        if cfg.hawkes_mode == "single_delta":
            deltas.append(max(float(P(params, "decay_delta")), 0.0))
        else:
            hid = relu(np.concatenate([q, keys[i]]) @ P(params, f"layer{layer}/decay_mlp/hidden/weight")
                       + P(params, f"layer{layer}/decay_mlp/hidden/bias"))
            z = hid @ P(params, f"layer{layer}/decay_mlp/out/weight") + P(params, f"layer{layer}/decay_mlp/out/bias")
            deltas.append(max(float(z[0]), 0.0))
    lam = softmax([math.exp(-deltas[i] * dts[i]) for i in range(n)])
    omega = None
    if cfg.use_centrality:
        omega = softmax([float(P(params, f"beta/{nt[nbr_types[i]]}")) * degs[i] for i in range(n)])
    alpha = softmax(P(params, "alpha_logits"))
    return msgs, attn, lam, omega, alpha, deltas


def layer_state(graph, params, cfg, layer, h_t, tgt_type, nbr_h, nbr_types, etypes, dts, degs, has):
    msgs, attn, lam, omega, alpha, _ = layer_weights(graph, params, cfg, layer, h_t, tgt_type, nbr_h,
                                                     nbr_types, etypes, dts, degs)
    dh = cfg.d // cfg.n_heads
    agg = np.zeros(cfg.d)
    if has:
        for hd in range(cfg.n_heads):
            sl = slice(hd * dh, (hd + 1) * dh)
            for i in range(len(msgs)):
                w = alpha[0] * attn[hd][i] + alpha[1] * lam[i]
                if omega is not None:
                    w += alpha[2] * omega[i]
                agg[sl] += w * msgs[i][sl]
    return h_t + lin(params, f"layer{layer}/adapt/{graph.node_types[tgt_type]}", agg)


def encode(graph, params, cfg, plan, level, row):
    """Recursive unrolled state of query ``row`` at plan level ``level``."""
    nodes, times = plan.nodes, plan.times
    if level == 0:
        return input_state(graph, params, cfg, nodes[0][row], plan.base_deg[row])
    lp = plan.layers[level - 1]
    n, nn = lp.n, cfg.n_neighbors
    h_t = encode(graph, params, cfg, plan, level - 1, row)
    nbr_rows = [n + row * nn + j for j in range(nn)]
    nbr_h = [encode(graph, params, cfg, plan, level - 1, r) for r in nbr_rows]
    sl = slice(row * nn, (row + 1) * nn)
    return layer_state(graph, params, cfg, level, h_t, lp.tgt_type[row], nbr_h, lp.nbr_type[sl],
                       lp.etype[sl], lp.dt[row], lp.nbr_deg[row], lp.mask[row] > 0)


def mlp_prob(params, prefix, x):
    h = relu(x @ P(params, f"{prefix}/hidden/weight") + P(params, f"{prefix}/hidden/bias"))
    return sigmoid(float((h @ P(params, f"{prefix}/out/weight") + P(params, f"{prefix}/out/bias"))[0]))
