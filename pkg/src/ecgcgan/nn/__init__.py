"""Minimal dense-tensor engine: 1D layers with hand-derived gradients, Adam, gradient checking."""

from .functional import ShapeError, sigmoid, softmax
from .gradcheck import GradCheckReport, gradient_check, relative_error
from .layers import (
    BatchNorm,
    Conv1d,
    ConvTranspose1d,
    Dense,
    Flatten,
    Layer,
    LeakyReLU,
    Sequential,
    Sigmoid,
    Softmax,
    Tensor,
)
from .optim import Adam, AdamState, NonFiniteGradientError, adam_step

__all__ = [
    "Adam",
    "AdamState",
    "BatchNorm",
    "Conv1d",
    "ConvTranspose1d",
    "Dense",
    "Flatten",
    "GradCheckReport",
    "Layer",
    "LeakyReLU",
    "NonFiniteGradientError",
    "Sequential",
    "ShapeError",
    "Sigmoid",
    "Softmax",
    "Tensor",
    "adam_step",
    "gradient_check",
    "relative_error",
    "sigmoid",
    "softmax",
]
