"""Minimal dense tensors with reverse-mode automatic differentiation."""

from .tensor import (
    PRECISIONS,
    Graph,
    GraphError,
    NonFiniteError,
    ShapeError,
    Tensor,
    apply,
    as_tensor,
    backward,
    count_ops,
    current_graph,
    default_dtype,
    grad_enabled,
    no_grad,
    op_kinds,
    precision,
    set_default_precision,
)
from . import ops
from .ops import (
    add,
    batch_norm,
    concat,
    log,
    matmul,
    mean,
    mul,
    relu,
    sigmoid,
    slice_cols,
    slice_rows,
    softmax_rows,
    square,
    sub,
    tanh,
)
from .gradcheck import GradcheckReport, NondeterministicError, gradcheck, numeric_gradient, relative_error

__all__ = [
    "PRECISIONS", "Graph", "GraphError", "NonFiniteError", "ShapeError", "Tensor",
    "apply", "as_tensor", "backward", "count_ops", "current_graph", "default_dtype",
    "grad_enabled", "no_grad", "op_kinds", "precision", "set_default_precision",
    "ops", "add", "batch_norm", "concat", "log", "matmul", "mean", "mul", "relu",
    "sigmoid", "slice_cols", "slice_rows", "softmax_rows", "square", "sub", "tanh",
    "GradcheckReport", "NondeterministicError", "gradcheck", "numeric_gradient",
    "relative_error",
]
