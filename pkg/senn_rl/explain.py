"""Local explanations, effect distributions and the bias report."""

from __future__ import annotations

from collections.abc import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from senn_rl.autodiff import no_grad
from senn_rl.env_sim import action_names, feature_names
from senn_rl.models import DecisionRecord, EffectDistribution
from senn_rl.senn import SennPolicy


def decision_records(
    policy: SennPolicy,
    observations: ArrayLike,
    actions: Sequence[int] | NDArray[np.int64] | None = None,
    episode: int = 0,
    step: int = 0,
) -> list[DecisionRecord]:
    """Explain a batch of observations in one forward pass (one record per row)."""
    batch = np.atleast_2d(np.asarray(observations, dtype=np.float64))
    with no_grad():
        theta = policy.relevance(batch).data
        effects = theta * batch[:, None, :]
        logits = effects.sum(axis=-1) + policy.bias.data
    chosen = np.argmax(logits, axis=-1) if actions is None else np.asarray(actions)
    bias = policy.bias_values()
    return [
        DecisionRecord(
            observation=batch[row].copy(),
            relevance=theta[row].copy(),
            logits=logits[row].copy(),
            bias=bias,
            action=int(chosen[row]),
            episode=episode,
            step=step,
            ue=row,
            effects=effects[row].copy(),
        )
        for row in range(batch.shape[0])
    ]


def local_explanation(policy: SennPolicy, x: ArrayLike) -> DecisionRecord:
    """Relevance, effects and logits for one observation with the greedy action."""
    return decision_records(policy, np.asarray(x, dtype=np.float64)[None, :])[0]


def effect_distribution(
    records: Iterable[DecisionRecord],
    action: int,
    n_actions: int,
    names: list[str] | None = None,
) -> EffectDistribution:
    """Collect ``E[action]`` of every record that chose ``action``.

    An action nobody took yields an empty distribution rather than an error.
    """
    if not 0 <= action < n_actions:
        raise ValueError(f"Unknown action id {action}; expected 0..{n_actions - 1}")
    rows = [record.effects[action] for record in records if record.action == action]
    if rows:
        samples = np.stack(rows)
    else:
        samples = np.zeros((0, len(names) if names is not None else 0))
    if names is None:
        names = [f"x{j}" for j in range(samples.shape[1])]
    return EffectDistribution(action=action, feature_names=names, samples=samples)


def effect_distributions(records: Sequence[DecisionRecord], n_actions: int, n_bs: int) -> list[EffectDistribution]:
    names = feature_names(n_bs)
    return [effect_distribution(records, action, n_actions, names) for action in range(n_actions)]


def bias_report(policy: SennPolicy) -> dict[str, float]:
    """Aggregator bias per action, labelled like the action space."""
    labels = action_names(policy.m - 1)
    return {label: float(value) for label, value in zip(labels, policy.bias_values())}
