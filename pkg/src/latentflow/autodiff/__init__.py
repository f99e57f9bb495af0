"""Minimal reverse-mode automatic differentiation engine (float64, CPU)."""
from .check import finite_diff_check
from .ops import (
    absolute,
    add,
    add_channel_bias,
    add_frame_bias,
    clamp,
    concat,
    conv1d,
    conv_transpose1d,
    dropout,
    exp,
    frame_signal,
    leaky_relu,
    log,
    matmul,
    mean,
    mul,
    narrow,
    pad_last,
    reshape,
    sqrt,
    square,
    sub,
    take_rows,
    tanh,
    total,
    transpose,
)
from .store import ParamStore, adam_step, backward
from .tensor import Tape, Tensor, active_tape, grad, no_grad, set_debug_checks

__all__ = [
    "Tensor",
    "Tape",
    "ParamStore",
    "active_tape",
    "no_grad",
    "grad",
    "backward",
    "adam_step",
    "finite_diff_check",
    "set_debug_checks",
    "add",
    "sub",
    "mul",
    "matmul",
    "conv1d",
    "conv_transpose1d",
    "leaky_relu",
    "tanh",
    "exp",
    "log",
    "sqrt",
    "square",
    "absolute",
    "mean",
    "total",
    "concat",
    "narrow",
    "pad_last",
    "reshape",
    "transpose",
    "dropout",
    "clamp",
    "take_rows",
    "add_channel_bias",
    "add_frame_bias",
    "frame_signal",
]
