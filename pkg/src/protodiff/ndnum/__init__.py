"""Array numerics and reverse-mode autodiff used by the denoiser and PAM."""
from .kernels import BACKEND
from .tensor import (
    GradMap,
    ShapeError,
    Tape,
    Tensor,
    add,
    assert_finite,
    concat,
    conv1d,
    conv_transpose1d,
    crop_end,
    matmul,
    mul,
    neg,
    pad_end,
    relu,
    reshape,
    silu,
    softmax,
    sub,
    transpose,
)

__all__ = [
    "BACKEND",
    "GradMap",
    "ShapeError",
    "Tape",
    "Tensor",
    "add",
    "assert_finite",
    "concat",
    "conv1d",
    "conv_transpose1d",
    "crop_end",
    "matmul",
    "mul",
    "neg",
    "pad_end",
    "relu",
    "reshape",
    "silu",
    "softmax",
    "sub",
    "transpose",
]
