"""Adam optimizer and global-norm gradient clipping over a ParameterSet."""

from __future__ import annotations

import math
from collections.abc import Mapping

import numpy as np

from senn_rl.autodiff import ParameterSet, Tensor


def global_norm(grads: Mapping[str, Tensor]) -> float:
    return math.sqrt(sum(float(np.sum(g.data * g.data)) for g in grads.values()))


def clip_grad_norm(grads: Mapping[str, Tensor], max_norm: float) -> tuple[dict[str, Tensor], float]:
    """Scale gradients so their joint L2 norm is at most ``max_norm``.

    Returns the (possibly rescaled) gradients and the norm before clipping.
    """
    total = global_norm(grads)
    if max_norm <= 0 or total <= max_norm:
        return dict(grads), total
    scale = max_norm / (total + 1e-6)
    return {name: Tensor._result(g.data * scale, None) for name, g in grads.items()}, total


class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    def __init__(
        self,
        params: ParameterSet,
        lr: float = 3e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-5,
    ) -> None:
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros(t.shape) for name, t in params.items()}
        self._v = {name: np.zeros(t.shape) for name, t in params.items()}

    def step(self, grads: Mapping[str, Tensor]) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for name, tensor in self.params.items():
            grad = grads.get(name)
            if grad is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad.data
            v *= self.beta2
            v += (1.0 - self.beta2) * grad.data * grad.data
            step = self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            tensor.data = tensor.data - step
