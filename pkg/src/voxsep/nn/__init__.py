"""Minimal tensor + reverse-mode autodiff engine."""

from . import functional
from .functional import (batch_norm, concat, conv1d, conv2d, conv_transpose1d, conv_transpose2d,
                         crop, crop_concat, decimate2, dropout, l1_loss, leaky_relu,
                         linear_upsample2, relu, sigmoid, tanh)
from .gradcheck import grad_check
from .optim import ParameterSet, adam_step
from .tensor import Tensor, no_grad

__all__ = [
    "Tensor", "no_grad", "ParameterSet", "adam_step", "grad_check", "functional",
    "batch_norm", "concat", "conv1d", "conv2d", "conv_transpose1d", "conv_transpose2d",
    "crop", "crop_concat", "decimate2", "dropout", "l1_loss", "leaky_relu",
    "linear_upsample2", "relu", "sigmoid", "tanh",
]
