"""Layer modules. Parameters are Tensors found in a module's attributes, in assignment order."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import DTYPE, Tensor, parameter

TRAIN, EVAL = "train", "eval"


class Module:
    training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in self.__dict__.items():
            if isinstance(val, Tensor) and val.requires_grad:
                yield prefix + key, val
            elif isinstance(val, Module):
                yield from val.named_parameters(f"{prefix}{key}.")
            elif isinstance(val, (list, tuple)):
                for k, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{k}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{prefix}{key}.{k}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for val in self.__dict__.values():
            if isinstance(val, Module):
                yield from val.modules()
            elif isinstance(val, (list, tuple)):
                for item in val:
                    if isinstance(item, Module):
                        yield from item.modules()

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        """Non-trainable state that belongs in checkpoints (batchnorm running statistics)."""
        out = []
        for k, m in enumerate(self.modules()):
            if isinstance(m, BatchNorm):
                out += [(f"bn{k}.running_mean", m.running_mean), (f"bn{k}.running_var", m.running_var)]
        return out

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def bias_uniform(rng: np.random.Generator, n: int, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=n)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = parameter(kaiming_uniform(rng, (n_in, n_out), n_in))
        self.bias = parameter(bias_uniform(rng, n_out, n_in)) if bias else None

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, kernel=(3, 3)):
        kh, kw = kernel
        fan_in = c_in * kh * kw
        self.weight = parameter(kaiming_uniform(rng, (c_out, c_in, kh, kw), fan_in))
        self.bias = parameter(bias_uniform(rng, c_out, fan_in))

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias)


class MaxPool2d(Module):
    def __init__(self, kernel=(2, 2)):
        self.kernel = tuple(kernel)

    def forward(self, x):
        return F.maxpool2d(x, self.kernel)


class ReLU(Module):
    def forward(self, x):
        return x.relu()


class Sigmoid(Module):
    def forward(self, x):
        return x.sigmoid()


class Flatten(Module):
    def forward(self, x):
        return x.reshape(x.shape[0], -1)


class BatchNorm(Module):
    """Batch statistics in train mode, running averages (momentum 0.1) in eval mode."""

    def __init__(self, n_features: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = parameter(np.ones(n_features))
        self.beta = parameter(np.zeros(n_features))
        self.running_mean = np.zeros(n_features, dtype=DTYPE)
        self.running_var = np.ones(n_features, dtype=DTYPE)
        self.momentum, self.eps = momentum, eps

    def forward(self, x):
        nf = self.gamma.shape[0]
        axis = 1 if x.ndim == 4 else -1
        if x.shape[axis] != nf:
            raise ValueError(f"batchnorm: expected {nf} features, input has shape {x.shape}")
        if not self.training:
            out, _, _ = F.batchnorm(x, self.gamma, self.beta, self.running_mean, self.running_var, self.eps)
            return out
        out, mu, var = F.batchnorm(x, self.gamma, self.beta, eps=self.eps)
        count = x.size // nf
        unbiased = var * count / max(count - 1, 1)
        self.running_mean *= 1 - self.momentum
        self.running_mean += self.momentum * mu
        self.running_var *= 1 - self.momentum
        self.running_var += self.momentum * unbiased
        return out


class Dropout(Module):
    """Inverted dropout; identity in eval mode."""

    def __init__(self, p: float, rng: np.random.Generator):
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must be in [0, 1)")
        self.p, self.rng = p, rng

    def forward(self, x):
        return F.dropout(x, self.p, self.rng, self.training)


class Sequential(Module):
    def __init__(self, *layers: Module):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


def apply_layer(layer: Module, x: Tensor, mode: str = TRAIN) -> Tensor:
    layer.train(mode == TRAIN)
    return layer(x)
