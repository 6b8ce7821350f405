"""Fully connected networks built on the autodiff engine."""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np

from senn_rl.autodiff import ParameterSet, Tensor, matmul, relu, tanh

ACTIVATIONS = {"tanh": tanh, "relu": relu}


def orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal matrix of ``shape`` scaled by ``gain`` (QR of a Gaussian draw)."""
    rows, cols = shape
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Mlp:
    """Dense network with weights stored input-major, so ``x @ W + b`` works for batches.

    Hidden layers use orthogonal init with gain sqrt(2); the output layer uses
    ``output_gain``. Parameters are named ``layers.<i>.weight`` / ``layers.<i>.bias``.
    """

    def __init__(
        self,
        sizes: Sequence[int],
        rng: np.random.Generator,
        activation: str = "tanh",
        output_gain: float = 1.0,
    ) -> None:
        if len(sizes) < 2 or any(size < 1 for size in sizes):
            raise ValueError(f"Invalid layer sizes: {list(sizes)}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation: {activation}")
        self.sizes = [int(size) for size in sizes]
        self.activation = activation
        self.params = ParameterSet()
        last = len(self.sizes) - 2
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            gain = output_gain if i == last else math.sqrt(2.0)
            self.params.add(f"layers.{i}.weight", Tensor(orthogonal((fan_in, fan_out), gain, rng)))
            self.params.add(f"layers.{i}.bias", Tensor(np.zeros(fan_out)))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def __call__(self, x: Tensor) -> Tensor:
        act = ACTIVATIONS[self.activation]
        hidden = x
        for i in range(self.n_layers):
            hidden = matmul(hidden, self.params[f"layers.{i}.weight"]) + self.params[f"layers.{i}.bias"]
            if i < self.n_layers - 1:
                hidden = act(hidden)
        return hidden
