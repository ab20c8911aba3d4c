"""Minimal dense-tensor engine with reverse-mode automatic differentiation."""

from . import ops
from .gradcheck import GradCheckReport, grad_check, numerical_gradient, relative_error
from .ops import (
    add,
    concat,
    conv1d,
    div,
    dropout,
    exp,
    glu,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    relu,
    sigmoid,
    softmax,
    sub,
    swish,
    tanh,
    transpose,
)
from .random import derive_seed, make_rng
from .tensor import (
    ContractError,
    NonFiniteError,
    ShapeError,
    Tensor,
    as_tensor,
    finite_checks,
    get_default_dtype,
    is_grad_enabled,
    no_grad,
    set_check_finite,
    set_default_dtype,
)

__all__ = [
    "ContractError",
    "GradCheckReport",
    "NonFiniteError",
    "ShapeError",
    "Tensor",
    "add",
    "as_tensor",
    "concat",
    "conv1d",
    "derive_seed",
    "div",
    "dropout",
    "exp",
    "get_default_dtype",
    "glu",
    "grad_check",
    "is_grad_enabled",
    "layer_norm",
    "log",
    "log_softmax",
    "make_rng",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "numerical_gradient",
    "ops",
    "relative_error",
    "relu",
    "finite_checks",
    "set_check_finite",
    "set_default_dtype",
    "sigmoid",
    "softmax",
    "sub",
    "swish",
    "tanh",
    "transpose",
]
