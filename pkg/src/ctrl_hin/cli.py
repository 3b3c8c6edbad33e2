"""Command-line entry point: ``ctrl-hin {generate,train,eval}``.

Configuration is a flat JSON object; every key can be overridden with
``--key value`` (flags win over the file). Log verbosity comes from the
``CTRL_HIN_LOG`` environment variable (DEBUG, INFO, WARNING; default INFO).
"""
import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field, fields

from .errors import CtrlError
from .evaluation import evaluate_inductive, write_scores_csv
from .graph import ingest, seen_nodes, temporal_split
from .model import ModelConfig, Schema, count_parameters, init_params, load_model, save_model
from .synth import SynthConfig, _default_member_types, _default_slots, generate
from .training import TrainConfig, fit, variant_flags

log = logging.getLogger("ctrl_hin")

COMMANDS = ("generate", "train", "eval")


@dataclass
class RunConfig:
    seed: int = 0
    data_dir: str = "data"
    out_dir: str = "run"
    checkpoint: str = ""  # defaults to <out_dir>/checkpoint
    # synthetic data
    n_events: int = 2000
    communities: int = 4
    noise: float = 0.1
    jitter: float = 0.1
    t_start: int = 0
    t_end: int = 100_000
    anchor_type: str = "paper"
    anchor_feature_dim: int = 16
    member_types: dict = field(default_factory=_default_member_types)
    slots: list = field(default_factory=_default_slots)
    # model
    d: int = 128
    n_layers: int = 2
    n_neighbors: int = 10
    n_heads: int = 2
    degree_buckets: int = 16
    # training
    variant: str = "full"
    learning_rate: float = 0.001
    batch_size: int = 1024
    epochs: int = 4
    micro_batch: int = 16
    clip_eps: float = 1e-7
    patience: int = 5
    train_frac: float = 0.7
    valid_frac: float = 0.15
    # evaluation
    eval_split: str = "test"
    threshold: float = 0.5
    report_path: str = ""
    scores_csv: str = ""

    @property
    def checkpoint_path(self):
        return self.checkpoint or os.path.join(self.out_dir, "checkpoint")

    def synth_config(self):
        return SynthConfig(anchor_type=self.anchor_type, anchor_feature_dim=self.anchor_feature_dim,
                           member_types=self.member_types, slots=self.slots, n_events=self.n_events,
                           t_start=self.t_start, t_end=self.t_end, communities=self.communities,
                           noise=self.noise, jitter=self.jitter, seed=self.seed)

    def train_config(self):
        return TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size, epochs=self.epochs,
                           seed=self.seed, clip_eps=self.clip_eps, patience=self.patience,
                           micro_batch=self.micro_batch, **variant_flags(self.variant))

    def model_config(self):
        flags = variant_flags(self.variant)
        return ModelConfig(d=self.d, n_layers=self.n_layers, n_neighbors=self.n_neighbors,
                           n_heads=self.n_heads, degree_buckets=self.degree_buckets,
                           use_centrality=flags.get("use_centrality", True),
                           hawkes_mode=flags.get("hawkes_mode", "edge_based"))


def _coerce(name, kind, raw):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind in (dict, list):
            val = json.loads(raw)
            if not isinstance(val, kind):
                raise ValueError(raw)
            return val
        return kind(raw)
    except (ValueError, json.JSONDecodeError):
        raise CtrlError(f"--{name}: cannot parse {raw!r} as {kind.__name__}") from None


def load_run_config(path, overrides):
    """Merge defaults, the JSON file at ``path`` (optional) and ``--key value`` overrides."""
    defaults = RunConfig()
    types = {f.name: type(getattr(defaults, f.name)) for f in fields(RunConfig)}
    values = {}
    if path:
        if not os.path.isfile(path):
            raise CtrlError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                values = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CtrlError(f"malformed config {path}: {exc}") from None
        if not isinstance(values, dict):
            raise CtrlError(f"config {path} must hold a flat JSON object")
        unknown = sorted(set(values) - set(types))
        if unknown:
            raise CtrlError(f"unknown config keys in {path}: {unknown}")
    it = iter(overrides)
    for tok in it:
        if not tok.startswith("--"):
            raise CtrlError(f"unexpected argument {tok!r}; overrides look like --key value")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, raw = key.split("=", 1)
        else:
            try:
                raw = next(it)
            except StopIteration:
                raise CtrlError(f"--{key} needs a value") from None
        if key not in types:
            raise CtrlError(f"unknown option --{key}")
        values[key] = _coerce(key, types[key], raw)
    return RunConfig(**values)


def _dataset_paths(cfg):
    paths = [os.path.join(cfg.data_dir, f) for f in ("nodes.jsonl", "edges.jsonl", "events.jsonl")]
    for p in paths:
        if not os.path.isfile(p):
            raise CtrlError(f"missing data file {p}; run `generate` first or set --data_dir")
    return paths


def cmd_generate(cfg):
    ds = generate(cfg.synth_config())
    paths = ds.write(cfg.data_dir)
    with open(os.path.join(cfg.data_dir, "synth_config.json"), "w") as fh:
        json.dump(cfg.synth_config().to_dict(), fh, indent=1, sort_keys=True)
    out = {"nodes": len(ds.nodes), "edges": len(ds.edges), "events": len(ds.events), "files": list(paths)}
    print(json.dumps(out, sort_keys=True))


def cmd_train(cfg):
    graph, events = ingest(*_dataset_paths(cfg))
    split = temporal_split(events, cfg.train_frac, cfg.valid_frac)
    mcfg, tcfg = cfg.model_config(), cfg.train_config()
    schema = Schema.from_graph(graph)
    params = init_params(schema, mcfg, seed=cfg.seed)
    log.info("training %s variant: %d parameters, %d/%d/%d events", cfg.variant, count_parameters(params),
             len(split.train_events), len(split.valid_events), len(split.test_events))
    os.makedirs(cfg.out_dir, exist_ok=True)
    t0 = time.perf_counter()
    params, records = fit(graph, split, params, mcfg, tcfg, log_path=os.path.join(cfg.out_dir, "train_log.jsonl"))
    save_model(cfg.checkpoint_path, params, mcfg, schema, {"variant": cfg.variant, "seed": cfg.seed})
    best = max((r.valid["auc"] for r in records), default=None)
    print(json.dumps({"checkpoint": cfg.checkpoint_path, "epochs_run": len(records), "best_valid_auc": best,
                      "seconds": round(time.perf_counter() - t0, 3)}, sort_keys=True))


def cmd_eval(cfg):
    ckpt = cfg.checkpoint_path
    if not os.path.isfile(os.path.join(ckpt, "manifest.json")):
        raise CtrlError(f"checkpoint not found: {ckpt}")
    params, mcfg, schema, _ = load_model(ckpt)
    graph, events = ingest(*_dataset_paths(cfg))
    if Schema.from_graph(graph) != schema:
        raise CtrlError(f"checkpoint {ckpt} was trained on a different schema than {cfg.data_dir}")
    split = temporal_split(events, cfg.train_frac, cfg.valid_frac)
    if cfg.eval_split not in ("valid", "test"):
        raise CtrlError(f"eval_split must be 'valid' or 'test', got {cfg.eval_split!r}")
    target = split.test_events if cfg.eval_split == "test" else split.valid_events
    report, rows = evaluate_inductive(graph, target, params, mcfg, cfg.seed, seen_nodes(split.train_events),
                                      threshold=cfg.threshold, return_rows=True)
    text = report.to_json()
    print(text)
    if cfg.report_path:
        with open(cfg.report_path, "w") as fh:
            fh.write(text + "\n")
    if cfg.scores_csv:
        write_scores_csv(cfg.scores_csv, rows)


def main(argv=None):
    logging.basicConfig(level=os.environ.get("CTRL_HIN_LOG", "INFO").upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    parser = argparse.ArgumentParser(prog="ctrl-hin", description=__doc__.splitlines()[0],
                                     epilog="Any config key may be passed as --key value.")
    parser.add_argument("command", help="one of: " + ", ".join(COMMANDS))
    parser.add_argument("--config", default=None, help="flat JSON config file")
    args, rest = parser.parse_known_args(argv)
    if args.command not in COMMANDS:
        parser.print_usage(sys.stderr)
        _fail("UsageError", f"unknown command {args.command!r}; expected one of {', '.join(COMMANDS)}", 2)
        return 2
    try:
        cfg = load_run_config(args.config, rest)
        {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval}[args.command](cfg)
    except CtrlError as exc:
        return _fail(type(exc).__name__, str(exc), 2 if type(exc) is CtrlError else 1)
    return 0


def _fail(kind, message, status):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
