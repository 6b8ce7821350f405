"""Self-explaining actor: identity concepts, MLP relevance, biased row-wise aggregation.

For an observation ``x`` with ``n`` features and ``m`` actions the parametrizer
produces a relevance matrix ``theta(x)`` of shape (m, n) and the logits are
``logits_i = theta_i(x) . x + b_i``. The effects ``theta_i(x) * x`` decompose each
logit exactly into per-feature contributions plus the bias.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from senn_rl.autodiff import (
    ParameterSet,
    Tensor,
    clip,
    constant,
    exp,
    gradient,
    log_softmax,
    mean,
    minimum,
    no_grad,
    norm,
    reshape,
    stack,
    sum_,
)
from senn_rl.errors import ShapeError
from senn_rl.nn import Mlp


def _as_input(x: Tensor | ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else constant(np.asarray(x, dtype=np.float64))


class ActorPolicy:
    """Shared surface of every actor arm: logits, sampling and greedy actions."""

    kind = "actor"
    n: int
    m: int
    params: ParameterSet

    def forward(self, x: Tensor | ArrayLike) -> Tensor:
        raise NotImplementedError

    def describe(self) -> dict[str, Any]:
        raise NotImplementedError

    def _check_input(self, x: Tensor) -> None:
        if x.ndim not in (1, 2) or x.shape[-1] != self.n:
            raise ShapeError(f"{self.kind} input", x.shape, (self.n,))

    def probabilities(self, obs: ArrayLike) -> NDArray[np.float64]:
        with no_grad():
            return np.exp(log_softmax(self.forward(obs), axis=-1).data)

    def act(
        self, obs: ArrayLike, rng: np.random.Generator | None = None
    ) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        """Sample actions (greedy argmax when ``rng`` is None) and their log-probabilities.

        Only the actor is consulted; value estimates never enter action selection.
        """
        batch = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        with no_grad():
            log_probs = log_softmax(self.forward(batch), axis=-1).data
        if rng is None:
            actions = np.argmax(log_probs, axis=-1)
        else:
            cumulative = np.cumsum(np.exp(log_probs), axis=-1)
            draws = rng.random(batch.shape[0])
            actions = np.minimum((cumulative < draws[:, None]).sum(axis=-1), self.m - 1)
        chosen = log_probs[np.arange(batch.shape[0]), actions]
        return actions.astype(np.int64), chosen


class MlpParametrizer:
    """MLP from an n-vector to an m x n relevance matrix."""

    def __init__(
        self,
        n: int,
        m: int,
        hidden_sizes: list[int],
        rng: np.random.Generator,
        activation: str = "tanh",
    ) -> None:
        self.n = n
        self.m = m
        self.hidden_sizes = list(hidden_sizes)
        self.activation = activation
        self.mlp = Mlp([n, *hidden_sizes, m * n], rng, activation=activation, output_gain=0.01)

    @property
    def params(self) -> ParameterSet:
        return self.mlp.params

    def __call__(self, x: Tensor) -> Tensor:
        flat = self.mlp(x)
        shape = (self.m, self.n) if x.ndim == 1 else (x.shape[0], self.m, self.n)
        return reshape(flat, shape)


class CallableParametrizer:
    """Relevance given by a fixed traced function, with optional parameters."""

    def __init__(self, fn: Callable[[Tensor], Tensor], params: ParameterSet | None = None) -> None:
        self.fn = fn
        self.params = params if params is not None else ParameterSet()

    def __call__(self, x: Tensor) -> Tensor:
        return self.fn(x)


Parametrizer = MlpParametrizer | CallableParametrizer


class SennPolicy(ActorPolicy):
    """Biased SENN actor; ``use_bias=False`` pins ``b`` to zero and leaves it untrained."""

    def __init__(self, parametrizer: Parametrizer, n: int, m: int, use_bias: bool = True) -> None:
        self.parametrizer = parametrizer
        self.n = n
        self.m = m
        self.use_bias = use_bias
        self.kind = "senn" if use_bias else "senn-nobias"
        self.bias = Tensor(np.zeros(m), requires_grad=use_bias, name="bias")
        groups = {"parametrizer": parametrizer.params}
        if use_bias:
            groups["aggregator"] = ParameterSet([("bias", self.bias)])
        self.params = ParameterSet.merge(groups)

    def concept(self, x: Tensor | ArrayLike) -> Tensor:
        """Identity conceptizer; its reconstruction loss is identically zero."""
        tensor = _as_input(x)
        self._check_input(tensor)
        return tensor

    def relevance(self, x: Tensor | ArrayLike) -> Tensor:
        tensor = self.concept(x)
        theta = self.parametrizer(tensor)
        expected = (self.m, self.n) if tensor.ndim == 1 else (tensor.shape[0], self.m, self.n)
        if theta.shape != expected:
            raise ShapeError("relevance", theta.shape, expected)
        return theta

    def _rows(self, x: Tensor) -> Tensor:
        return x if x.ndim == 1 else reshape(x, (x.shape[0], 1, self.n))

    def effects(self, x: Tensor | ArrayLike) -> Tensor:
        tensor = self.concept(x)
        return self.relevance(tensor) * self._rows(tensor)

    def forward(self, x: Tensor | ArrayLike) -> Tensor:
        return sum_(self.effects(x), axis=-1) + self.bias

    def robustness_loss(self, x: Tensor | ArrayLike, create_graph: bool = True) -> Tensor:
        """Frobenius norm of ``grad_x f(x) - theta(x)``, averaged over a batch.

        With ``create_graph`` the result stays differentiable with respect to
        the parametrizer parameters.
        """
        data = _as_input(x).data
        single = data.ndim == 1
        batch = Tensor(np.atleast_2d(data), requires_grad=True)
        self._check_input(batch)
        theta = self.relevance(batch)
        logits = sum_(theta * self._rows(batch), axis=-1) + self.bias
        rows = [
            gradient(sum_(logits[:, i]), batch, create_graph=create_graph)
            for i in range(self.m)
        ]
        residual = stack(rows, axis=1) - theta
        per_sample = norm(residual, axis=(1, 2))
        return per_sample[0] if single else mean(per_sample)

    def bias_values(self) -> NDArray[np.float64]:
        return self.bias.numpy()

    def describe(self) -> dict[str, Any]:
        layout: dict[str, Any] = {"kind": self.kind, "n": self.n, "m": self.m}
        if isinstance(self.parametrizer, MlpParametrizer):
            layout["hidden_sizes"] = self.parametrizer.hidden_sizes
            layout["activation"] = self.parametrizer.activation
        return layout


class DnnPolicy(ActorPolicy):
    """Plain MLP actor with direct logits, same hidden budget as the SENN."""

    kind = "dnn"

    def __init__(self, n: int, m: int, hidden_sizes: list[int], rng: np.random.Generator) -> None:
        self.n = n
        self.m = m
        self.hidden_sizes = list(hidden_sizes)
        self.mlp = Mlp([n, *hidden_sizes, m], rng, output_gain=0.01)
        self.params = ParameterSet.merge({"mlp": self.mlp.params})

    def forward(self, x: Tensor | ArrayLike) -> Tensor:
        tensor = _as_input(x)
        self._check_input(tensor)
        return self.mlp(tensor)

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind, "n": self.n, "m": self.m, "hidden_sizes": self.hidden_sizes}


def build_actor(kind: str, n: int, m: int, hidden_sizes: list[int], rng: np.random.Generator) -> ActorPolicy:
    if kind == "dnn":
        return DnnPolicy(n, m, hidden_sizes, rng)
    if kind in ("senn", "senn-nobias"):
        return SennPolicy(MlpParametrizer(n, m, hidden_sizes, rng), n, m, use_bias=kind == "senn")
    raise ValueError(f"Unknown actor kind: {kind}")


@dataclass(slots=True)
class ActorLossTerms:
    policy_loss: float
    entropy: float
    robustness: float
    approx_kl: float
    clip_fraction: float


def actor_loss(
    policy: ActorPolicy,
    obs: NDArray[np.float64],
    actions: NDArray[np.int64],
    old_log_probs: NDArray[np.float64],
    advantages: NDArray[np.float64],
    clip_eps: float,
    ent_coef: float,
    robustness_lambda: float,
) -> tuple[Tensor, ActorLossTerms]:
    """Clipped surrogate minus entropy bonus plus the weighted robustness term.

    The robustness term is always evaluated and reported; it only enters the
    differentiable total when its weight is positive.
    """
    if len(obs) == 0:
        raise ValueError("actor_loss needs a nonempty batch")
    logits = policy.forward(constant(obs))
    log_probs_all = log_softmax(logits, axis=-1)
    onehot = constant(np.eye(policy.m)[actions])
    log_probs = sum_(log_probs_all * onehot, axis=-1)
    ratio = exp(log_probs - constant(old_log_probs))
    adv = constant(advantages)
    surrogate = minimum(ratio * adv, clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv)
    policy_loss = -mean(surrogate)
    entropy = -mean(sum_(exp(log_probs_all) * log_probs_all, axis=-1))
    total = policy_loss - ent_coef * entropy

    robustness_value = 0.0
    if isinstance(policy, SennPolicy):
        robustness = policy.robustness_loss(obs, create_graph=robustness_lambda > 0)
        robustness_value = robustness.item()
        if robustness_lambda > 0:
            total = total + robustness_lambda * robustness

    ratio_data = ratio.data
    terms = ActorLossTerms(
        policy_loss=policy_loss.item(),
        entropy=entropy.item(),
        robustness=robustness_value,
        approx_kl=float(np.mean((ratio_data - 1.0) - np.log(ratio_data))),
        clip_fraction=float(np.mean(np.abs(ratio_data - 1.0) > clip_eps)),
    )
    return total, terms
