from .gradcheck import GradCheckReport, grad_check, relative_error
from .nn import MLP, LayerNorm, Linear, Module
from .optim import AdamW, StepDecay
from .tensor import (
    Parameter,
    Tensor,
    add,
    as_tensor,
    backward,
    clamp_min,
    concat,
    div,
    exp,
    gelu,
    getitem,
    is_grad_enabled,
    layer_norm,
    log,
    log_softmax,
    masked_fill,
    matmul,
    mean,
    mul,
    no_grad,
    power,
    relu,
    reshape,
    sigmoid,
    softmax,
    softmax_rows,
    sqrt,
    stack,
    sub,
    swapaxes,
    tanh,
    transpose,
    tsum,
    zero_grad,
)
