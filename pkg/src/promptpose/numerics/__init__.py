"""Tensor engine: dense arrays + reverse-mode autodiff + seeded randomness."""

from .rng import Rng, derive_seed, splitmix64
from .tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    cos,
    cross_entropy_with_logits,
    embedding,
    gather_rows,
    gelu,
    get_default_dtype,
    grad_enabled,
    l1_distance,
    layer_norm,
    linear,
    matmul,
    mul,
    neg,
    no_grad,
    precision,
    reshape,
    rope,
    scaled_attention,
    set_default_dtype,
    sigmoid,
    sin,
    slice_axis,
    softmax,
    stack,
    sub,
    swapaxes,
    tmean,
    tsum,
)

__all__ = [
    "Rng", "derive_seed", "splitmix64",
    "Tensor", "add", "as_tensor", "backward", "concat", "cos",
    "cross_entropy_with_logits", "embedding", "gather_rows", "gelu",
    "get_default_dtype", "grad_enabled", "l1_distance", "layer_norm",
    "linear", "matmul", "mul", "neg", "no_grad", "precision", "reshape",
    "rope", "scaled_attention", "set_default_dtype", "sigmoid", "sin",
    "slice_axis", "softmax",
    "stack", "sub", "swapaxes", "tmean", "tsum",
]
