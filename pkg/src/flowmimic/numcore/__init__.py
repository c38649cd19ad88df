"""Dense-array numerics with reverse-mode differentiation."""

from .graph import (
    DIFFERENTIABLE_OPS,
    Node,
    add,
    as_array,
    backward,
    concat,
    constant,
    embedding,
    gather,
    gelu,
    l1_distance,
    l2_distance,
    layer_norm,
    matmul,
    mean,
    mul,
    reduce_max,
    reduce_sum,
    relu,
    reshape,
    slice_,
    softmax,
    sub,
    transpose,
)
from .store import ADAM_BETAS, ADAM_EPS, ADAM_LR, CHECKPOINT_FORMAT, ParamStore

__all__ = [
    "DIFFERENTIABLE_OPS", "Node", "ParamStore", "add", "as_array", "backward",
    "concat", "constant", "embedding", "gather", "gelu", "l1_distance",
    "l2_distance", "layer_norm", "matmul", "mean", "mul", "reduce_max",
    "reduce_sum", "relu", "reshape", "slice_", "softmax", "sub", "transpose",
    "ADAM_LR", "ADAM_BETAS", "ADAM_EPS", "CHECKPOINT_FORMAT",
]
