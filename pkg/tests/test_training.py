import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctrl_hin.errors import ConfigError, ContractError, NumericError
from ctrl_hin.graph import TemporalHinGraph, temporal_split
from ctrl_hin.model import ModelConfig, Schema, count_parameters, init_params
from ctrl_hin.synth import SynthConfig, generate
from ctrl_hin.evaluation import evaluate_inductive
from ctrl_hin.tensor import AdamState, Tape, Tensor, adam_step, backward, ops
from ctrl_hin.training import (TrainConfig, _pair_loss, accumulate_batch, batch_objective, event_occurrence_loss, fit,
                               prepare_batch, snapshot, topo_loss, train_step, variant_flags, zero_grads)

LN2 = math.log(2)


def small_world(seed=0, n_events=160):
    ds = generate(SynthConfig(n_events=n_events, seed=seed, anchor_feature_dim=4,
                              member_types={"author": {"count": 40, "feature_dim": 4},
                                            "venue": {"count": 4, "feature_dim": 4}}))
    return TemporalHinGraph(ds.nodes, ds.edges, ds.events), ds.events


def configs(variant="full", **kw):
    flags = variant_flags(variant)
    mcfg = ModelConfig(d=8, n_layers=1, n_neighbors=3, n_heads=2,
                       use_centrality=flags.get("use_centrality", True),
                       hawkes_mode=flags.get("hawkes_mode", "edge_based"))
    return mcfg, TrainConfig(**{"learning_rate": 0.01, "batch_size": 16, "micro_batch": 8, **kw, **flags})


# -- losses ---------------------------------------------------------------------------


def test_occurrence_loss_examples():
    eps = 1e-7
    assert event_occurrence_loss(1.0, 0.0, eps) == pytest.approx(-2 * math.log(1 - eps), abs=1e-15)
    assert event_occurrence_loss(0.5, 0.5) == pytest.approx(2 * LN2, abs=1e-15)
    assert event_occurrence_loss(0.0, 0.3, eps) == pytest.approx(-math.log(eps) - math.log(0.7), abs=1e-12)


def test_topo_loss_examples():
    assert topo_loss([(0.5, 0.5)]) == pytest.approx(2 * LN2, abs=1e-15)
    assert topo_loss([(1.0, 0.0), (0.5, 0.5)]) == pytest.approx(LN2, abs=1e-6)
    assert topo_loss([(1.0, 0.0)] * 3) < 1e-6
    with pytest.raises(ContractError):
        topo_loss([])


def test_losses_reject_nonfinite():
    with pytest.raises(NumericError):
        event_occurrence_loss(float("nan"), 0.5)
    with pytest.raises(NumericError):
        topo_loss([(0.5, float("inf"))])


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_losses_nonnegative(a, b):
    assert event_occurrence_loss(a, b) >= 0
    assert topo_loss([(a, b), (b, a)]) >= 0


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ConfigError):
        TrainConfig(hawkes_mode="multi")
    with pytest.raises(ConfigError):
        variant_flags("no-hawkes")


# -- steps ------------------------------------------------------------------------------


def test_variant_flags_nest():
    assert variant_flags("full") == {}
    assert variant_flags("single-delta") == {"use_event_loss": False, "use_centrality": False,
                                             "hawkes_mode": "single_delta"}


def test_variant_parameter_counts():
    g, _ = small_world()
    schema = Schema.from_graph(g)
    counts = {v: count_parameters(init_params(schema, configs(v)[0])) for v in
              ("full", "no-event-loss", "no-centrality", "single-delta")}
    d, L = 8, 1
    assert counts["full"] == counts["no-event-loss"]
    assert counts["no-event-loss"] - counts["no-centrality"] == 16 * d + len(schema.node_types) + 1
    assert counts["no-centrality"] - counts["single-delta"] == L * (2 * d * d + d + d + 1) - 1


def test_event_loss_off_zero_event_grads():
    g, events = small_world()
    mcfg, tcfg = configs("no-event-loss")
    p = init_params(Schema.from_graph(g), mcfg)
    accumulate_batch(g, p, mcfg, tcfg, events[40:56], list(range(16)))
    for k, t in p.items():
        if k.startswith("mlp_event/"):
            assert t.grad is None or not np.any(t.grad)
    assert np.any(p["mlp_edge/out/weight"].grad)


def test_centrality_off_invariance(rng):
    g, events = small_world()
    mcfg, tcfg = configs("no-centrality")
    p = init_params(Schema.from_graph(g), mcfg)
    batch = prepare_batch(g, events[40:60], mcfg, 0, list(range(20)), False)
    base = batch_objective(g, p, mcfg, batch, use_event_loss=False)[2]
    # the ablated model owns no beta or degree table; extra ones must be ignored
    extra = dict(p)
    for a in g.node_types:
        extra[f"beta/{a}"] = init_params(Schema.from_graph(g), configs("full")[0])["beta/" + a]
        extra[f"beta/{a}"].data[...] = rng.normal()
    extra["degree_table"] = init_params(Schema.from_graph(g), configs("full")[0])["degree_table"]
    assert np.array_equal(batch_objective(g, extra, mcfg, batch, use_event_loss=False)[2], base)


def test_batch_loss_is_sum_of_event_losses():
    g, events = small_world()
    mcfg, tcfg = configs()
    p = init_params(Schema.from_graph(g), mcfg)
    evs, keys = events[50:70], [(1, i) for i in range(20)]
    with Tape():
        total, occ, topo = batch_objective(g, p, mcfg, prepare_batch(g, evs, mcfg, 3, keys))
    singles = [batch_objective(g, p, mcfg, prepare_batch(g, [e], mcfg, 3, [k]))[0].item()
               for e, k in zip(evs, keys)]
    assert total.item() == pytest.approx(sum(singles), abs=1e-9)
    assert np.allclose(occ + topo, singles, atol=1e-9)


def test_micro_batching_gives_same_gradients():
    g, events = small_world()
    mcfg, tcfg = configs()
    evs, keys = events[50:70], list(range(20))
    grads = []
    for mb in (3, 20):
        p = init_params(Schema.from_graph(g), mcfg)
        tc = TrainConfig(micro_batch=mb, learning_rate=0.01)
        accumulate_batch(g, p, mcfg, tc, evs, keys)
        grads.append({k: t.grad for k, t in p.items()})
    for k in grads[0]:
        assert np.allclose(grads[0][k], grads[1][k], atol=1e-10)


def test_perfect_probabilities_give_no_update():
    # probabilities saturated at the clamp: loss ~ 0 and no gradient reaches the logits
    z_pos = Tensor(np.array([50.0, 60.0]), requires_grad=True)
    z_neg = Tensor(np.array([-50.0, -70.0]), requires_grad=True)
    with Tape() as tape:
        loss = ops.sum(_pair_loss(ops.sigmoid(z_pos), ops.sigmoid(z_neg), 1e-7))
    backward(loss, tape)
    assert loss.item() == pytest.approx(-4 * math.log(1 - 1e-7), rel=1e-9)
    params = {"pos": z_pos, "neg": z_neg}
    before = snapshot(params)
    adam_step(params, AdamState(learning_rate=0.01))
    assert all(np.array_equal(before[k], params[k].data) for k in params)


def test_train_step_deterministic():
    g, events = small_world()
    mcfg, tcfg = configs()
    outs = []
    for _ in range(2):
        p = init_params(Schema.from_graph(g), mcfg, seed=4)
        adam = AdamState(learning_rate=0.01)
        for s in range(3):
            train_step(g, p, mcfg, tcfg, events[40:72], [(s, i) for i in range(32)], adam)
        outs.append(snapshot(p))
    assert all(np.array_equal(outs[0][k], outs[1][k]) for k in outs[0])


def test_loss_decreases_on_fixed_batch():
    g, events = small_world()
    mcfg, tcfg = configs(learning_rate=0.01)
    p = init_params(Schema.from_graph(g), mcfg)
    adam = AdamState(learning_rate=0.01)
    evs, keys = events[60:84], list(range(24))
    losses = [train_step(g, p, mcfg, tcfg, evs, keys, adam)[0] for _ in range(50)]
    ups = sum(b > a for a, b in zip(losses, losses[1:]))
    assert ups <= 5
    assert losses[-1] < 0.5 * losses[0]


def test_empty_batch():
    g, _ = small_world()
    mcfg, tcfg = configs()
    with pytest.raises(ContractError):
        train_step(g, init_params(Schema.from_graph(g), mcfg), mcfg, tcfg, [], [], AdamState())


def test_nonfinite_loss_names_event():
    g, events = small_world()
    mcfg, tcfg = configs()
    p = init_params(Schema.from_graph(g), mcfg)
    p["mlp_edge/out/bias"].data[...] = np.nan
    ev = events[70]
    with pytest.raises(NumericError, match=f"anchored at {ev.anchor}"):
        train_step(g, p, mcfg, tcfg, [ev], [0], AdamState())


# -- fit ---------------------------------------------------------------------------------


def test_fit_zero_epochs():
    g, events = small_world()
    mcfg, tcfg = configs(epochs=0)
    p = init_params(Schema.from_graph(g), mcfg)
    before = snapshot(p)
    out, log = fit(g, temporal_split(events, 0.7, 0.15), p, mcfg, tcfg)
    assert log == [] and all(np.array_equal(before[k], out[k].data) for k in before)


def test_fit_flag_mismatch():
    g, events = small_world()
    mcfg, _ = configs()
    _, tcfg = configs("no-centrality")
    with pytest.raises(ConfigError):
        fit(g, temporal_split(events, 0.7, 0.15), init_params(Schema.from_graph(g), mcfg), mcfg, tcfg)


def test_fit_improves_validation_auc(tmp_path):
    g, events = small_world(n_events=400)
    split = temporal_split(events, 0.7, 0.15)
    mcfg = ModelConfig(d=16, n_layers=1, n_neighbors=4, n_heads=2)
    tcfg = TrainConfig(learning_rate=0.01, batch_size=32, epochs=5, patience=5)
    p = init_params(Schema.from_graph(g), mcfg)
    auc0 = evaluate_inductive(g, split.valid_events, p, mcfg, 0).auc
    p, log = fit(g, split, p, mcfg, tcfg, log_path=tmp_path / "log.jsonl")
    assert len(log) == 5
    assert max(r.valid["auc"] for r in log) > auc0
    assert len((tmp_path / "log.jsonl").read_text().splitlines()) == 5
    # best-epoch parameters are restored
    assert evaluate_inductive(g, split.valid_events, p, mcfg, 0).auc == max(r.valid["auc"] for r in log)
