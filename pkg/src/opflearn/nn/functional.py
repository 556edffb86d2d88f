"""Differentiable primitives beyond elementwise arithmetic."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import DTYPE, Tensor, as_tensor

BCE_EPS = 1e-7


def _check(cond: bool, layer: str, msg: str):
    if not cond:
        raise ValueError(f"{layer}: {msg}")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    _check(x.shape[-1] == w.shape[0], "linear", f"input {x.shape} does not match weight {w.shape}")
    out = x @ w
    return out if b is None else out + b


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Stride-1 cross-correlation with 'same' zero padding (odd kernels). x: (N,C,H,W), w: (O,C,kh,kw)."""
    _check(x.ndim == 4 and w.ndim == 4, "conv2d", f"expected 4-d input and weight, got {x.shape}, {w.shape}")
    _check(x.shape[1] == w.shape[1], "conv2d", f"input channels {x.shape[1]} != weight channels {w.shape[1]}")
    kh, kw = w.shape[2:]
    _check(kh % 2 == 1 and kw % 2 == 1, "conv2d", "kernel sizes must be odd")
    ph, pw = kh // 2, kw // 2
    n, c, h, wd = x.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # (N, C, H, W, kh, kw)
    W = w.data
    out = np.einsum("nchwij,ocij->nohw", win, W, optimize=True)

    def back(g):
        gw = np.einsum("nchwij,nohw->ocij", win, g, optimize=True)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + h, j:j + wd] += np.einsum("nohw,oc->nchw", g, W[:, :, i, j], optimize=True)
        return gxp[:, :, ph:ph + h, pw:pw + wd], gw

    y = Tensor._make(out, (x, w), back, "conv2d")
    return y if b is None else y + as_tensor(b).reshape(1, -1, 1, 1)


def maxpool2d(x: Tensor, kernel=(2, 2)) -> Tensor:
    """Non-overlapping max pooling; trailing rows/cols that do not fill a window are dropped."""
    _check(x.ndim == 4, "maxpool2d", f"expected (N,C,H,W), got {x.shape}")
    kh, kw = kernel
    n, c, h, w = x.shape
    ho, wo = h // kh, w // kw
    _check(ho > 0 and wo > 0, "maxpool2d", f"input {x.shape} smaller than kernel {kernel}")
    crop = x.data[:, :, :ho * kh, :wo * kw]
    blocks = crop.reshape(n, c, ho, kh, wo, kw).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, kh * kw)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def back(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gb = gb.reshape(n, c, ho, wo, kh, kw).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * kh, wo * kw)
        gx = np.zeros(x.shape, dtype=DTYPE)
        gx[:, :, :ho * kh, :wo * kw] = gb
        return (gx,)

    return Tensor._make(out, (x,), back, "maxpool2d")


def bn_axes(ndim: int) -> tuple[int, ...]:
    """Reduction axes: (N,F) → 0, (N,V,F) → (0,1), (N,C,H,W) → (0,2,3)."""
    return {2: (0,), 3: (0, 1), 4: (0, 2, 3)}[ndim]


def bn_shape(ndim: int, nf: int) -> tuple[int, ...]:
    return {2: (1, nf), 3: (1, 1, nf), 4: (1, nf, 1, 1)}[ndim]


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, mean=None, var=None, eps: float = 1e-5):
    """Normalize with the given statistics, or with batch statistics when they are None.

    Returns (output, batch_mean, batch_var); the batch statistics are plain arrays.
    """
    axes = bn_axes(x.ndim)
    shape = bn_shape(x.ndim, gamma.shape[0])
    if mean is None:
        mu = x.mean(axis=axes, keepdims=True)
        xc = x - mu
        v = (xc * xc).mean(axis=axes, keepdims=True)
        xhat = xc / (v + eps) ** 0.5
        stats = (mu.data.reshape(-1), v.data.reshape(-1))
    else:
        xhat = (x - np.reshape(mean, shape)) * (1.0 / np.sqrt(np.reshape(var, shape) + eps))
        stats = (None, None)
    return xhat * gamma.reshape(shape) + beta.reshape(shape), stats[0], stats[1]


def dropout(x: Tensor, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask


def mse_loss(pred: Tensor, target) -> Tensor:
    target = as_tensor(target)
    _check(pred.shape == target.shape, "mse_loss", f"shapes {pred.shape} and {target.shape} differ")
    d = pred - target
    return (d * d).mean()


def bce_loss(prob: Tensor, labels) -> Tensor:
    labels = as_tensor(labels)
    _check(prob.shape == labels.shape, "bce_loss", f"shapes {prob.shape} and {labels.shape} differ")
    p = prob.clip(BCE_EPS, 1 - BCE_EPS)
    y = labels.data
    return -(p.log() * y + (1 - p).log() * (1 - y)).mean()
