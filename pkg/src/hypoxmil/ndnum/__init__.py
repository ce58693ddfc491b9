"""Minimal tensor library with reverse-mode autodiff."""

from .gradcheck import GradCheckReport, gradient_check, rel_error
from .tensor import (
    CE_EPS,
    ParamStore,
    ShapeError,
    Tensor,
    add,
    backward,
    conv2d,
    cross_entropy,
    global_avg_pool,
    matmul,
    maxpool2,
    pick,
    relu,
    reshape,
    softmax,
    tanh_act,
    topo_order,
    transpose,
)

__all__ = [
    "CE_EPS",
    "GradCheckReport",
    "ParamStore",
    "ShapeError",
    "Tensor",
    "add",
    "backward",
    "conv2d",
    "cross_entropy",
    "global_avg_pool",
    "gradient_check",
    "matmul",
    "maxpool2",
    "pick",
    "rel_error",
    "relu",
    "reshape",
    "softmax",
    "tanh_act",
    "topo_order",
    "transpose",
]
