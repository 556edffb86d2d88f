"""Small numpy autodiff library used by the model zoo."""
from .tensor import GraphFreedError, Tensor, as_tensor, concat, parameter, propagate, topological_order
from .functional import bce_loss, mse_loss
from .layers import (EVAL, TRAIN, BatchNorm, Conv2d, Dropout, Flatten, Linear, MaxPool2d, Module, ReLU,
                     Sequential, Sigmoid, apply_layer)
from .optim import Adam, AdamState, adam_step
from .rng import RNGStreams
from .gradcheck import gradcheck, relative_error

__all__ = [
    "Tensor", "GraphFreedError", "as_tensor", "concat", "parameter", "propagate", "topological_order",
    "mse_loss", "bce_loss", "Module", "Linear", "Conv2d", "MaxPool2d", "ReLU", "Sigmoid", "Flatten",
    "BatchNorm", "Dropout", "Sequential", "apply_layer", "TRAIN", "EVAL", "Adam", "AdamState", "adam_step",
    "RNGStreams", "gradcheck", "relative_error",
]
