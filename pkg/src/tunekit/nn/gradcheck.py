"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: list[Tensor],
    n_samples: int = 32,
    h: float = 1e-4,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between backprop and central differences.

    ``loss_fn`` must rebuild the graph from ``params`` on every call and
    return a scalar.  Parameters should be float64 for the comparison to
    be meaningful at the 1e-4 level.
    """
    if rng is None:
        rng = np.random.default_rng(0)

    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]

    worst = 0.0
    for _ in range(n_samples):
        pi = int(rng.integers(len(params)))
        param = params[pi]
        flat = int(rng.integers(param.data.size))
        original = param.data.flat[flat]

        param.data.flat[flat] = original + h
        up = loss_fn().item()
        param.data.flat[flat] = original - h
        down = loss_fn().item()
        param.data.flat[flat] = original

        numeric = (up - down) / (2.0 * h)
        a = analytic[pi].flat[flat]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst
