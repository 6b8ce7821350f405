"""Tests for local explanations, effect distributions and the bias report."""

from __future__ import annotations

import numpy as np
import pytest

from senn_rl.env_sim import feature_names
from senn_rl.errors import TraceFormatError
from senn_rl.explain import (
    bias_report,
    decision_records,
    effect_distribution,
    effect_distributions,
    local_explanation,
)
from senn_rl.models import DecisionRecord
from senn_rl.senn import MlpParametrizer, SennPolicy

N_BS = 3
N, M = 4 * N_BS + 1, N_BS + 1


def _policy(use_bias: bool = True) -> SennPolicy:
    rng = np.random.default_rng(0)
    policy = SennPolicy(MlpParametrizer(N, M, [8], rng), N, M, use_bias=use_bias)
    for tensor in policy.params.values():
        tensor.data = tensor.data + rng.normal(scale=0.3, size=tensor.shape)
    if use_bias:
        policy.bias.data = np.array([0.5, -0.25, 0.0, 1.0])
    return policy


def test_local_explanation_picks_the_greedy_action() -> None:
    """The record explains the argmax action and decomposes its logits."""
    policy = _policy()
    x = np.random.default_rng(1).uniform(size=N)
    record = local_explanation(policy, x)

    assert record.shape == (M, N)
    assert record.action == int(np.argmax(record.logits))
    np.testing.assert_allclose(record.effects, record.relevance * x[None, :])
    np.testing.assert_allclose(record.effects.sum(axis=1) + record.bias, record.logits, atol=1e-12)
    np.testing.assert_array_equal(record.chosen_relevance(), record.relevance[record.action])


def test_decision_records_keep_given_actions_and_ue_index() -> None:
    """Batched records carry the supplied actions and their row as UE id."""
    policy = _policy()
    batch = np.random.default_rng(2).uniform(size=(3, N))
    records = decision_records(policy, batch, actions=[0, 3, 1], episode=2, step=7)
    assert [record.action for record in records] == [0, 3, 1]
    assert [record.ue for record in records] == [0, 1, 2]
    assert {(record.episode, record.step) for record in records} == {(2, 7)}


def test_record_rejects_a_broken_decomposition() -> None:
    """A record whose effects do not sum to its logits is malformed."""
    record = local_explanation(_policy(), np.ones(N))
    payload = record.to_dict()
    payload["logits"] = [value + 1.0 for value in payload["logits"]]
    with pytest.raises(TraceFormatError, match="decompose"):
        DecisionRecord.from_dict(payload)
    with pytest.raises(TraceFormatError, match="missing"):
        DecisionRecord.from_dict({"observation": [0.0]})


def test_effect_distribution_collects_chosen_rows_only() -> None:
    """Only records that chose the action contribute their effect row."""
    policy = _policy()
    batch = np.random.default_rng(3).uniform(size=(6, N))
    records = decision_records(policy, batch, actions=[1, 2, 1, 0, 1, 2])
    names = feature_names(N_BS)

    dist = effect_distribution(records, 1, M, names)
    assert dist.count == 3
    np.testing.assert_allclose(dist.samples, np.stack([records[i].effects[1] for i in (0, 2, 4)]))
    np.testing.assert_allclose(dist.means, dist.samples.mean(axis=0))
    assert dist.feature_names == names


def test_unchosen_action_gives_empty_distribution() -> None:
    """An action nobody took yields an empty distribution, not an error."""
    records = decision_records(_policy(), np.zeros((2, N)), actions=[0, 0])
    dist = effect_distribution(records, 3, M, feature_names(N_BS))
    assert dist.empty
    assert dist.means is None
    assert dist.samples.shape == (0, N)
    assert dist.to_dict()["means"] is None

    with pytest.raises(ValueError, match="Unknown action"):
        effect_distribution(records, M, M)


def test_effect_distributions_cover_every_action() -> None:
    """One distribution per action, labelled with the feature names."""
    records = decision_records(_policy(), np.random.default_rng(4).uniform(size=(10, N)))
    dists = effect_distributions(records, M, N_BS)
    assert [dist.action for dist in dists] == list(range(M))
    assert sum(dist.count for dist in dists) == 10


def test_bias_report_labels_actions() -> None:
    """Bias values are keyed by action name; the unbiased arm reports zeros."""
    report = bias_report(_policy())
    assert report == {"no_action": 0.5, "toggle_bs1": -0.25, "toggle_bs2": 0.0, "toggle_bs3": 1.0}
    assert set(bias_report(_policy(use_bias=False)).values()) == {0.0}
