"""Tests for the local Lipschitz estimate."""

from __future__ import annotations

import numpy as np
import pytest

from senn_rl.autodiff import ParameterSet, Tensor, broadcast_to
from senn_rl.lipschitz import lipschitz_estimate
from senn_rl.senn import CallableParametrizer, MlpParametrizer, SennPolicy

N = 5


def _linear_policy(weights: np.ndarray) -> SennPolicy:
    theta = Tensor(weights)

    def fn(x: Tensor) -> Tensor:
        return theta if x.ndim == 1 else broadcast_to(theta, (x.shape[0], *theta.shape))

    return SennPolicy(CallableParametrizer(fn, ParameterSet([("theta", theta)])), weights.shape[1], weights.shape[0])


def _mlp_policy() -> SennPolicy:
    rng = np.random.default_rng(0)
    policy = SennPolicy(MlpParametrizer(N, 3, [8], rng), N, 3)
    for tensor in policy.params.values():
        tensor.data = tensor.data + rng.normal(scale=0.5, size=tensor.shape)
    return policy


def test_linear_map_has_its_scale_as_constant() -> None:
    """f(x) = 2x has local Lipschitz constant 2 at every anchor."""
    anchors = np.random.default_rng(1).uniform(size=(6, N))
    estimate = lipschitz_estimate(_linear_policy(2.0 * np.eye(N)), anchors, eps_ball=0.5, iterations=10)
    np.testing.assert_allclose(estimate.per_anchor, 2.0, atol=1e-6)
    assert estimate.global_max == pytest.approx(2.0, abs=1e-6)
    assert estimate.anchor_count == 6


def test_constant_policy_has_zero_constant() -> None:
    """Zero relevance makes the logits constant."""
    estimate = lipschitz_estimate(_linear_policy(np.zeros((3, N))), np.ones((2, N)), iterations=5)
    np.testing.assert_array_equal(estimate.per_anchor, 0.0)


def test_estimate_is_nondecreasing_in_iterations() -> None:
    """More ascent steps never lower the running maximum."""
    policy = _mlp_policy()
    anchors = np.random.default_rng(2).uniform(size=(4, N))
    values = [
        lipschitz_estimate(policy, anchors, eps_ball=0.5, iterations=k, step_size=0.05, seed=3).per_anchor
        for k in (0, 5, 20)
    ]
    assert np.all(values[1] >= values[0])
    assert np.all(values[2] >= values[1])
    assert np.all(values[0] > 0.0)


def test_estimate_is_independent_of_anchor_order() -> None:
    """Per-anchor values follow their anchor when the batch is reordered."""
    policy = _mlp_policy()
    anchors = np.random.default_rng(4).uniform(size=(5, N))
    order = np.array([3, 0, 4, 1, 2])
    forward = lipschitz_estimate(policy, anchors, iterations=8, seed=1).per_anchor
    shuffled = lipschitz_estimate(policy, anchors[order], iterations=8, seed=1).per_anchor
    np.testing.assert_allclose(shuffled, forward[order], rtol=1e-9)


def test_points_respect_the_box_and_empty_anchor_sets() -> None:
    """Bounds clip the search; no anchors gives an empty estimate; eps must be positive."""
    policy = _mlp_policy()
    anchors = np.zeros((2, N))
    bounds = (np.zeros(N), np.ones(N))
    estimate = lipschitz_estimate(policy, anchors, iterations=5, bounds=bounds)
    assert np.all(np.isfinite(estimate.per_anchor))

    empty = lipschitz_estimate(policy, np.zeros((0, N)))
    assert empty.anchor_count == 0
    assert empty.global_max == 0.0
    with pytest.raises(ValueError, match="eps_ball"):
        lipschitz_estimate(policy, anchors, eps_ball=0.0)
