from .optim import Adam, OptimState, adam_step, clip_grad_norm
from .serialization import load_tensors, save_tensors
from .tensor import (
    OPS,
    DomainError,
    ShapeError,
    Tensor,
    add,
    backward,
    broadcast,
    clamp,
    concat,
    div,
    exp,
    forward_op,
    gather_rows,
    grad_check,
    log,
    log_softmax,
    matmul,
    mean,
    minimum,
    mul,
    no_grad,
    relu,
    reshape,
    softmax,
    sqrt,
    square,
    sub,
    sum_,
    tanh,
    zero_grads,
)

__all__ = [
    "OPS", "Adam", "DomainError", "OptimState", "ShapeError", "Tensor", "adam_step", "add", "backward",
    "broadcast", "clamp", "clip_grad_norm", "concat", "div", "exp", "forward_op", "gather_rows", "grad_check",
    "load_tensors", "log", "log_softmax", "matmul", "mean", "minimum", "mul", "no_grad", "relu", "reshape",
    "save_tensors", "softmax", "sqrt", "square", "sub", "sum_", "tanh", "zero_grads",
]
