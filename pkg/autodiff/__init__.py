from autodiff.tensor import Tape, Tensor, backward, is_grad_enabled, make_op, no_grad
from autodiff import ops
from autodiff.gradcheck import gradcheck, numerical_gradient

__all__ = [
    "Tape",
    "Tensor",
    "backward",
    "is_grad_enabled",
    "make_op",
    "no_grad",
    "ops",
    "gradcheck",
    "numerical_gradient"
]
