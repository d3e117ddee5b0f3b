"""Float64 tensor substrate with reverse-mode differentiation."""

from .gradcheck import GradCheckReport, grad_check
from .nn import clip_grad_norm, dropout, gated_scan, layer_norm, lstm_cell, lstm_seq
from .ops import (
    add, bias_add, bmm, concat, div, elementwise, exp, getitem, linear, log, matmul,
    log_softmax, mean, mul, power, relu, reshape, scale, sigmoid, softmax, sqrt, square, stack,
    sub, sum, tanh, transpose,
)
from .params import ModelParams
from .rng import STREAMS, RngState
from .tensor import (
    ContractError,
    DegenerateInputError,
    DimensionError,
    DomainError,
    Tensor,
    as_tensor,
    backward,
    is_recording,
    make_op,
    no_grad,
    zero_grad,
)
