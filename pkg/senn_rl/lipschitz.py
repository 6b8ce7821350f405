"""Local Lipschitz estimate of the policy logits by projected gradient ascent."""

from __future__ import annotations

import hashlib

import numpy as np
from numpy.typing import ArrayLike, NDArray

from senn_rl.autodiff import Tensor, constant, gradient, no_grad, norm, reciprocal_safe, sum_
from senn_rl.models import LipschitzEstimate
from senn_rl.senn import ActorPolicy

START_FRACTION = 0.1
MIN_DISTANCE = 1e-12


def _anchor_rng(seed: int, anchor: NDArray[np.float64]) -> np.random.Generator:
    digest = hashlib.sha256(np.ascontiguousarray(anchor, dtype="<f8").tobytes()).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "little")])


def _project(
    points: NDArray[np.float64],
    anchors: NDArray[np.float64],
    eps_ball: float,
    bounds: tuple[NDArray[np.float64], NDArray[np.float64]] | None,
) -> NDArray[np.float64]:
    """Pull points back into the eps-ball around their anchor, then into the box."""
    offsets = points - anchors
    lengths = np.linalg.norm(offsets, axis=1, keepdims=True)
    scale = np.where(lengths > eps_ball, eps_ball / np.maximum(lengths, MIN_DISTANCE), 1.0)
    projected = anchors + offsets * scale
    if bounds is not None:
        projected = np.clip(projected, bounds[0], bounds[1])
    return projected


def _ratios(policy: ActorPolicy, points: Tensor, anchors: NDArray[np.float64], f0: NDArray[np.float64]) -> Tensor:
    numerator = norm(policy.forward(points) - constant(f0), axis=1)
    denominator = norm(points - constant(anchors), axis=1)
    return numerator * reciprocal_safe(denominator)


def lipschitz_estimate(
    policy: ActorPolicy,
    anchors: ArrayLike,
    eps_ball: float = 0.5,
    iterations: int = 40,
    step_size: float = 0.01,
    seed: int = 0,
    bounds: tuple[NDArray[np.float64], NDArray[np.float64]] | None = None,
) -> LipschitzEstimate:
    """Maximize ``|f(x) - f(x0)| / |x - x0|`` over the eps-ball around each anchor.

    Each anchor starts from a small random offset drawn from a generator keyed
    by the seed and the anchor's bytes, so results do not depend on anchor
    order. The reported value per anchor is the running maximum, which makes
    the estimate nondecreasing in ``iterations``.
    """
    if eps_ball <= 0:
        raise ValueError("eps_ball must be > 0")
    x0 = np.atleast_2d(np.asarray(anchors, dtype=np.float64))
    if x0.shape[0] == 0:
        return LipschitzEstimate(np.zeros(0), eps_ball, iterations, step_size, seed)

    offsets = []
    for anchor in x0:
        direction = _anchor_rng(seed, anchor).standard_normal(anchor.shape[0])
        offsets.append(direction * (START_FRACTION * eps_ball / max(np.linalg.norm(direction), MIN_DISTANCE)))
    x = _project(x0 + np.stack(offsets), x0, eps_ball, bounds)

    with no_grad():
        f0 = policy.forward(x0).data

    def evaluate(points: NDArray[np.float64]) -> NDArray[np.float64]:
        with no_grad():
            values = _ratios(policy, constant(points), x0, f0).data
        valid = np.linalg.norm(points - x0, axis=1) > MIN_DISTANCE
        return np.where(valid, values, 0.0)

    best = evaluate(x)
    for _ in range(iterations):
        leaf = Tensor(x, requires_grad=True)
        grads = gradient(sum_(_ratios(policy, leaf, x0, f0)), leaf).data
        lengths = np.linalg.norm(grads, axis=1, keepdims=True)
        moving = lengths[:, 0] > 0.0
        if not moving.any():
            break
        stepped = x + step_size * np.where(moving[:, None], grads / np.maximum(lengths, MIN_DISTANCE), 0.0)
        x = _project(stepped, x0, eps_ball, bounds)
        best = np.maximum(best, evaluate(x))
    return LipschitzEstimate(per_anchor=best, eps_ball=eps_ball, iterations=iterations, step_size=step_size, seed=seed)
