from .tensor import (
    Tensor,
    as_tensor,
    add,
    mul,
    matmul,
    tanh,
    sigmoid,
    relu,
    softmax,
    cross_entropy,
    mse,
    embedding_lookup,
    concat,
    stack,
    narrow,
    unfold_windows,
    max_along,
)
from .nn import (
    ParamSet,
    linear,
    lstm_params,
    lstm_cell,
    run_lstm,
    attention_params,
    multihead_attention,
    sinusoidal_encoding,
    conv2d,
    conv_full_width,
)
from .optim import SGD, Adam, make_optimizer, optimize_step
from .serialize import save_params, load_params
from .gradcheck import finite_difference_check

__all__ = [
    "Tensor", "as_tensor", "add", "mul", "matmul", "tanh", "sigmoid", "relu",
    "softmax", "cross_entropy", "mse", "embedding_lookup", "concat", "stack",
    "narrow", "unfold_windows", "max_along",
    "ParamSet", "linear", "lstm_params", "lstm_cell", "run_lstm",
    "attention_params", "multihead_attention", "sinusoidal_encoding",
    "conv2d", "conv_full_width",
    "SGD", "Adam", "make_optimizer", "optimize_step",
    "save_params", "load_params", "finite_difference_check",
]
