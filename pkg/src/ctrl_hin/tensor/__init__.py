"""Minimal dense tensors with reverse-mode differentiation and Adam."""
from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .ops import elementwise, matmul, softmax
from .optim import AdamState, adam_step
from .tensor import DTYPE, Tape, Tensor, active_tape, as_tensor, backward

__all__ = [
    "DTYPE", "AdamState", "Tape", "Tensor", "active_tape", "adam_step", "as_tensor", "backward",
    "elementwise", "load_checkpoint", "matmul", "ops", "save_checkpoint", "softmax",
]
