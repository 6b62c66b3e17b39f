from .gradcheck import finite_diff_grad, finite_diff_jacobian
from .layers import MLP, Dense, dense_backward, dense_forward
from .optim import Adam, adam_step
from .prng import Prng, derive_seed, standard_normal
from .tensor import (DTYPE, add, argmax, as_tensor, clip, div, exp, ln, log_softmax, matmul,
                     mean, mul, scale, sub, tsum)

__all__ = [
    "Adam", "DTYPE", "Dense", "MLP", "Prng", "adam_step", "add", "argmax", "as_tensor", "clip",
    "dense_backward", "dense_forward", "derive_seed", "div", "exp", "finite_diff_grad",
    "finite_diff_jacobian", "ln", "log_softmax", "matmul", "mean", "mul", "scale",
    "standard_normal", "sub", "tsum",
]
