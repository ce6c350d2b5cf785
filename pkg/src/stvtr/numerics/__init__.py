from .kernels import backend_name
from .optim import AdamW, clip_grad_norm
from .tensor import (
    NormalizedRows,
    ParameterSet,
    Tensor,
    absolute,
    add,
    backward,
    diag_part,
    div,
    exp,
    finite_diff_check,
    gelu,
    l2_normalize,
    layernorm,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    repeat_rows,
    reshape,
    rope_rotate,
    softmax_lastdim,
    sum_,
    take_rows,
    tile_rows,
    transpose,
)

__all__ = [
    "AdamW",
    "NormalizedRows",
    "ParameterSet",
    "Tensor",
    "absolute",
    "add",
    "backend_name",
    "backward",
    "clip_grad_norm",
    "diag_part",
    "div",
    "exp",
    "finite_diff_check",
    "gelu",
    "l2_normalize",
    "layernorm",
    "log",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "relu",
    "repeat_rows",
    "reshape",
    "rope_rotate",
    "softmax_lastdim",
    "sum_",
    "take_rows",
    "tile_rows",
    "transpose",
]
