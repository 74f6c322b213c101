"""
Minimal differentiable tensor core (NCHW arrays and a reverse-mode tape).
"""

from src.tensor.core import GradTape, Gradients, Tensor, backward, current_tape, resolve_dtype, set_debug
from src.tensor.ops import (
    add,
    concat_grid,
    conv2d,
    conv_transpose2d,
    mse_half,
    relu,
    resize_bilinear,
    split_grid,
)
from src.tensor.gradcheck import finite_diff_grad, relative_error

__all__ = [
    "GradTape", "Gradients", "Tensor", "backward", "current_tape", "resolve_dtype", "set_debug",
    "add", "concat_grid", "conv2d", "conv_transpose2d", "mse_half", "relu",
    "resize_bilinear", "split_grid", "finite_diff_grad", "relative_error",
]
