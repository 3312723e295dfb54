"""Reverse-mode autodiff over dense float64 tensors, plus Jacobi eigensolvers."""
from .linalg import nuclear_norm, singular_values, spectrum
from .tensor import (
    Tape,
    Tensor,
    add,
    add_bias,
    as_tensor,
    backward,
    concat,
    cross_entropy_loss,
    elementwise,
    embedding,
    exp,
    gelu,
    getitem,
    layer_norm,
    log,
    matmul,
    mean,
    mul,
    power,
    relu,
    reshape,
    seq_windows,
    sigmoid,
    softmax,
    sub,
    swapaxes,
    tanh,
    tsum,
    zero_grad,
)
