"""Central finite-difference gradient checking.

The independent oracle for every differentiable operation: perturb one input
coordinate by +/-eps, difference the scalar loss, and compare against the
gradient obtained from the backward pass.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def finite_difference_check(fn, leaves: list[Tensor], eps: float = 1e-6,
                            max_coords: int | None = None, rng=None) -> float:
    """Return the worst relative error between analytic and numeric gradients.

    ``fn`` rebuilds the scalar loss from the given leaf tensors on every call.
    When ``max_coords`` is set, only that many coordinates per leaf are probed
    (chosen with ``rng``), which keeps whole-model checks fast.
    """
    for leaf in leaves:
        leaf.grad = None
    loss = fn()
    loss.backward()
    analytic = [np.array(leaf.grad, copy=True) if leaf.grad is not None
                else np.zeros_like(leaf.data) for leaf in leaves]
    for leaf in leaves:
        leaf.grad = None

    worst = 0.0
    for leaf, grad in zip(leaves, analytic):
        flat = leaf.data.reshape(-1)
        coords = range(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = sorted({rng.integer(flat.size) for _ in range(max_coords)})
        for i in coords:
            original = flat[i]
            flat[i] = original + eps
            up = fn().item()
            flat[i] = original - eps
            down = fn().item()
            flat[i] = original
            numeric = (up - down) / (2.0 * eps)
            a = grad.reshape(-1)[i]
            scale = max(abs(a), abs(numeric), 1e-7)
            worst = max(worst, abs(a - numeric) / scale)
    return worst
