"""Tests for post-hoc and intrinsic attributions and their comparison."""

from __future__ import annotations

import numpy as np
import pytest
from returns.maybe import Nothing

from senn_rl.attribution import (
    attribution_compare,
    attribution_gradshap,
    attribution_ig,
    attribution_ixg,
    cluster_importance_attribution,
    effect_mean_attribution,
    global_attribution,
    input_gradients,
    rank_correlation,
    sign_agreement,
)
from senn_rl.autodiff import ParameterSet, Tensor, broadcast_to, no_grad
from senn_rl.clustering import attach_cluster_sets, kmeans
from senn_rl.explain import decision_records, effect_distribution
from senn_rl.models import AttributionReport, ClusterModel
from senn_rl.senn import CallableParametrizer, MlpParametrizer, SennPolicy

N, M = 6, 3
WEIGHTS = np.random.default_rng(0).normal(size=(M, N))


def _linear_policy() -> SennPolicy:
    theta = Tensor(WEIGHTS)

    def fn(x: Tensor) -> Tensor:
        return theta if x.ndim == 1 else broadcast_to(theta, (x.shape[0], *theta.shape))

    policy = SennPolicy(CallableParametrizer(fn, ParameterSet([("theta", theta)])), N, M)
    policy.bias.data = np.array([0.1, -0.2, 0.3])
    return policy


def _mlp_policy() -> SennPolicy:
    rng = np.random.default_rng(1)
    policy = SennPolicy(MlpParametrizer(N, M, [8], rng), N, M)
    for tensor in policy.params.values():
        tensor.data = tensor.data + rng.normal(scale=0.4, size=tensor.shape)
    return policy


def test_linear_policy_attributions_equal_weight_times_input() -> None:
    """For a linear policy IxG, IG and GradSHAP all give W[a] * x."""
    policy = _linear_policy()
    x = np.random.default_rng(2).uniform(0.1, 1.0, size=N)
    expected = WEIGHTS[1] * x

    np.testing.assert_allclose(attribution_ixg(policy, x, 1).values, expected, rtol=1e-12)
    np.testing.assert_allclose(attribution_ig(policy, x, 1, steps=32).values, expected, rtol=1e-12)
    gradshap = attribution_gradshap(policy, x, 1, baselines=np.zeros((4, N)), n_samples=64, noise=0.01, seed=0)
    np.testing.assert_allclose(gradshap.values, expected, rtol=0.05)


def test_integrated_gradients_are_complete() -> None:
    """IG values sum to f(x) - f(baseline) for a nonlinear policy."""
    policy = _mlp_policy()
    x = np.random.default_rng(3).uniform(size=N)
    baseline = np.full(N, 0.2)
    report = attribution_ig(policy, x, 2, baseline=baseline, steps=256)
    with no_grad():
        gap = policy.forward(x).data[2] - policy.forward(baseline).data[2]
    assert report.values.sum() == pytest.approx(gap, rel=1e-3, abs=1e-6)
    assert report.baseline == "custom"


def test_gradshap_is_seeded() -> None:
    """Same seed, same GradSHAP values."""
    policy = _mlp_policy()
    x = np.ones(N)
    pool = np.random.default_rng(4).uniform(size=(10, N))
    first = attribution_gradshap(policy, x, 0, pool, n_samples=32, noise=0.01, seed=5)
    second = attribution_gradshap(policy, x, 0, pool, n_samples=32, noise=0.01, seed=5)
    np.testing.assert_array_equal(first.values, second.values)


def test_argument_checks() -> None:
    """Too few IG steps or an unknown action are rejected."""
    policy = _linear_policy()
    with pytest.raises(ValueError, match="16 steps"):
        attribution_ig(policy, np.ones(N), 0, steps=8)
    with pytest.raises(ValueError, match="outside"):
        attribution_ixg(policy, np.ones(N), M)
    with pytest.raises(ValueError, match="at least 8 samples"):
        attribution_gradshap(policy, np.ones(N), 0, np.zeros((2, N)), n_samples=4)
    with pytest.raises(ValueError, match="Unknown attribution method"):
        AttributionReport("lime", 0, np.zeros(N))


def test_global_attribution_averages_matching_records() -> None:
    """Global IxG is the mean over records that chose the action; unchosen actions give Nothing."""
    policy = _linear_policy()
    observations = np.random.default_rng(6).uniform(size=(8, N))
    records = decision_records(policy, observations, actions=[0, 1, 0, 1, 0, 1, 0, 0])

    report = global_attribution("ixg", policy, records, 0).unwrap()
    chosen = observations[[0, 2, 4, 6, 7]]
    np.testing.assert_allclose(report.values, WEIGHTS[0] * chosen.mean(axis=0))
    assert global_attribution("ig", policy, records, 2) == Nothing
    with pytest.raises(ValueError, match="Unsupported"):
        global_attribution("effect_mean", policy, records, 0)

    capped = global_attribution("ixg", policy, records, 0, max_records=2, seed=1).unwrap()
    assert capped.baseline == "mean over 2 records"


def test_intrinsic_attributions() -> None:
    """Effect means and cluster importance become reports when defined."""
    policy = _linear_policy()
    observations = np.random.default_rng(7).uniform(size=(12, N))
    records = decision_records(policy, observations, actions=[0] * 6 + [1] * 6)

    report = effect_mean_attribution(effect_distribution(records, 0, M)).unwrap()
    np.testing.assert_allclose(report.values, WEIGHTS[0] * observations[:6].mean(axis=0))
    assert effect_mean_attribution(effect_distribution(records, 2, M)) == Nothing

    model = kmeans(observations, 2, seed=0, labels=[r.action for r in records], n_labels=M)
    attach_cluster_sets(model, tau=0.3)
    assert cluster_importance_attribution(model, 2, N) == Nothing
    for action in (0, 1):
        if model.importance.get(action) is not None:
            assert cluster_importance_attribution(model, action, N).unwrap().values.shape == (N,)


def test_full_matrix_importance_yields_the_action_row() -> None:
    """A row-major m x n importance vector is cut down to the row of its action."""
    full = np.arange(M * N, dtype=np.float64)
    model = ClusterModel(
        k=1, centroids=full[None, :], assignments=np.zeros(4, dtype=np.int64), distortion=0.0, iterations=1
    )
    model.importance = {1: full, 2: np.ones(5)}

    report = cluster_importance_attribution(model, 1, N).unwrap()
    np.testing.assert_array_equal(report.values, full.reshape(M, N)[1])
    assert report.baseline == "full_matrix row"
    assert cluster_importance_attribution(model, 2, N) == Nothing
    assert cluster_importance_attribution(model, 0, N) == Nothing


def test_sign_agreement_and_rank_correlation() -> None:
    """Zeros are ignored for signs; constant vectors have no rank correlation."""
    left = np.array([1.0, -2.0, 0.0, 3.0])
    right = np.array([2.0, 1.0, 5.0, 4.0])
    assert sign_agreement(left, right) == pytest.approx(2.0 / 3.0)
    assert sign_agreement(np.zeros(3), np.ones(3)) is None
    assert rank_correlation(left, left * 10.0) == pytest.approx(1.0)
    assert rank_correlation(np.ones(4), right) is None


def test_compare_builds_table_and_pairs() -> None:
    """The comparison lists every method pair and rejects mixed inputs."""
    reports = [
        AttributionReport("ixg", 1, np.array([1.0, 2.0, 3.0])),
        AttributionReport("ig", 1, np.array([1.5, 2.5, 2.0])),
        AttributionReport("effect_mean", 1, np.array([-1.0, 0.5, 4.0])),
    ]
    comparison = attribution_compare(reports, ["a", "b", "c"])
    assert comparison.methods == ["ixg", "ig", "effect_mean"]
    assert comparison.table[0] == [1.0, 1.5, -1.0]
    assert [(pair.left, pair.right) for pair in comparison.pairs] == [
        ("ixg", "ig"),
        ("ixg", "effect_mean"),
        ("ig", "effect_mean"),
    ]
    assert comparison.pairs[0].rank_correlation == pytest.approx(0.5)
    assert comparison.to_dict()["feature_names"] == ["a", "b", "c"]

    with pytest.raises(ValueError, match="at least two"):
        attribution_compare(reports[:1])
    with pytest.raises(ValueError, match="different actions"):
        attribution_compare([reports[0], AttributionReport("ig", 2, np.zeros(3))])
    with pytest.raises(ValueError, match="feature counts"):
        attribution_compare([reports[0], AttributionReport("ig", 1, np.zeros(2))])


def test_gradshap_degenerate_sampler_is_gradient_times_offset() -> None:
    """One baseline, no noise and alpha=1 reduce GradSHAP to grad(x) * (x - baseline)."""
    policy = _mlp_policy()
    x = np.random.default_rng(8).uniform(size=N)
    baseline = np.full(N, 0.3)
    report = attribution_gradshap(policy, x, 1, baseline[None, :], n_samples=8, noise=0.0, alpha=1.0)
    expected = input_gradients(policy, x, 1)[0] * (x - baseline)
    np.testing.assert_allclose(report.values, expected, rtol=1e-12)


def test_integrated_gradients_converge_with_steps() -> None:
    """Doubling the steps moves every value closer to a fine-grid reference."""
    policy = _mlp_policy()
    x = np.random.default_rng(9).uniform(size=N)
    reference = attribution_ig(policy, x, 0, steps=1024).values
    coarse = attribution_ig(policy, x, 0, steps=64).values
    fine = attribution_ig(policy, x, 0, steps=128).values
    assert np.all(np.abs(fine - reference) <= np.abs(coarse - reference) + 1e-12)
    with no_grad():
        gap = policy.forward(x).data[0] - policy.forward(np.zeros(N)).data[0]
    assert fine.sum() == pytest.approx(gap, rel=1e-2, abs=1e-6)
