"""Central finite-difference check of reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """‖a − b‖ / max(‖a‖ + ‖b‖, floor), over the flattened entries.

    The floor keeps gradients that vanish identically (a bias right before batchnorm)
    from turning round-off into a relative error of 1.
    """
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), floor))


def gradcheck(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
              max_entries: int | None = 30, rng: np.random.Generator | None = None) -> float:
    """Relative error between backward() and central differences, over all sampled coordinates.

    ``loss_fn`` must rebuild the scalar loss from the current parameter values on every call.
    At most ``max_entries`` randomly chosen coordinates per parameter are perturbed.
    """
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]
    got, want = [], []
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        pick = np.arange(n) if max_entries is None or n <= max_entries else rng.choice(n, max_entries, replace=False)
        num = np.empty(len(pick))
        for k, i in enumerate(pick):
            old = flat[i]
            flat[i] = old + eps
            fp = loss_fn().item()
            flat[i] = old - eps
            fm = loss_fn().item()
            flat[i] = old
            num[k] = (fp - fm) / (2 * eps)
        got.append(ga.reshape(-1)[pick])
        want.append(num)
    return relative_error(np.concatenate(got), np.concatenate(want))
