"""Minimal reverse-mode differentiation core."""

from . import tensor
from .engine import finite_diff_check, loss_and_gradients
from .params import OWNERS, GradientSet, ParameterStore
from .tensor import Tensor

__all__ = ["GradientSet", "OWNERS", "ParameterStore", "Tensor", "finite_diff_check",
           "loss_and_gradients", "tensor"]
