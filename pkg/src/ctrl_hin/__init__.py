"""Continuous-time representation learning on temporal heterogeneous graphs."""
from .errors import CtrlError
from .graph import EventRecord, TemporalHinGraph, TemporalSplit, ingest, seen_nodes, temporal_split
from .model import CtrlModel, ModelConfig, Schema, init_params, load_model, save_model
from .training import TrainConfig, fit

__version__ = "0.1.0"

__all__ = [
    "CtrlError", "CtrlModel", "EventRecord", "ModelConfig", "Schema", "TemporalHinGraph", "TemporalSplit",
    "TrainConfig", "fit", "ingest", "init_params", "load_model", "save_model", "seen_nodes", "temporal_split",
]
