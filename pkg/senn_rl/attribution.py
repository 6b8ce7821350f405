"""Post-hoc attributions (IxG, IG, GradSHAP), intrinsic attributions and their comparison."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from returns.maybe import Maybe, Nothing, Some
from scipy.stats import spearmanr

from senn_rl.autodiff import Tensor, gradient, sum_
from senn_rl.models import AttributionReport, ClusterModel, DecisionRecord, EffectDistribution
from senn_rl.senn import ActorPolicy

FloatArray = NDArray[np.float64]


def input_gradients(policy: ActorPolicy, points: ArrayLike, action: int) -> FloatArray:
    """Gradient of ``logits[action]`` at every row of ``points``."""
    batch = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if not 0 <= action < policy.m:
        raise ValueError(f"action {action} outside 0..{policy.m - 1}")
    leaf = Tensor(batch, requires_grad=True)
    logits = policy.forward(leaf)
    return gradient(sum_(logits[:, action]), leaf).data


def attribution_ixg(policy: ActorPolicy, x: ArrayLike, action: int) -> AttributionReport:
    point = np.asarray(x, dtype=np.float64)
    values = point * input_gradients(policy, point, action)[0]
    return AttributionReport("ixg", action, values, baseline="none")


def attribution_ig(
    policy: ActorPolicy,
    x: ArrayLike,
    action: int,
    baseline: ArrayLike | None = None,
    steps: int = 128,
) -> AttributionReport:
    """Integrated gradients with a midpoint Riemann sum along the straight path."""
    if steps < 16:
        raise ValueError("integrated gradients needs at least 16 steps")
    point = np.asarray(x, dtype=np.float64)
    reference = np.zeros_like(point) if baseline is None else np.asarray(baseline, dtype=np.float64)
    alphas = (np.arange(steps) + 0.5) / steps
    path = reference[None, :] + alphas[:, None] * (point - reference)[None, :]
    average = input_gradients(policy, path, action).mean(axis=0)
    label = "zeros" if baseline is None else "custom"
    return AttributionReport("ig", action, (point - reference) * average, baseline=label)


def attribution_gradshap(
    policy: ActorPolicy,
    x: ArrayLike,
    action: int,
    baselines: ArrayLike,
    n_samples: int = 512,
    noise: float = 0.0,
    seed: int = 0,
    alpha: float | None = None,
) -> AttributionReport:
    """Expected gradient times (x - baseline) over sampled baselines and interpolants.

    Each sample draws a baseline row, an interpolation factor (fixed when
    ``alpha`` is given) and Gaussian input noise of scale ``noise``.
    """
    if n_samples < 8:
        raise ValueError("GradSHAP needs at least 8 samples")
    point = np.asarray(x, dtype=np.float64)
    pool = np.atleast_2d(np.asarray(baselines, dtype=np.float64))
    rng = np.random.default_rng(seed)
    picks = pool[rng.integers(pool.shape[0], size=n_samples)]
    factors = np.full(n_samples, alpha) if alpha is not None else rng.uniform(size=n_samples)
    jitter = rng.normal(0.0, noise, size=(n_samples, point.shape[0])) if noise > 0 else 0.0
    samples = picks + factors[:, None] * (point[None, :] + jitter - picks)
    grads = input_gradients(policy, samples, action)
    values = (grads * (point[None, :] - picks)).mean(axis=0)
    return AttributionReport("gradshap", action, values, baseline=f"{pool.shape[0]} baselines, noise={noise}")


def effect_mean_attribution(distribution: EffectDistribution) -> Maybe[AttributionReport]:
    means = distribution.means
    if means is None:
        return Nothing
    return Some(AttributionReport("effect_mean", distribution.action, means, baseline="none"))


def cluster_importance_attribution(model: ClusterModel, action: int, n_features: int) -> Maybe[AttributionReport]:
    """Importance vector of ``action`` as an ``n_features`` report.

    Full-matrix importance vectors are row-major m x n; the row of ``action`` is taken.
    """
    vector = model.importance.get(action)
    if vector is None:
        return Nothing
    if vector.shape[0] == n_features:
        return Some(AttributionReport("cluster_importance", action, vector, baseline="none"))
    if vector.shape[0] % n_features != 0 or not 0 <= action < vector.shape[0] // n_features:
        return Nothing
    row = vector.reshape(-1, n_features)[action]
    return Some(AttributionReport("cluster_importance", action, row, baseline="full_matrix row"))


def global_attribution(
    method: str,
    policy: ActorPolicy,
    records: Sequence[DecisionRecord],
    action: int,
    max_records: int = 512,
    seed: int = 0,
    ig_steps: int = 128,
    gradshap_samples: int = 512,
    gradshap_noise: float = 0.0,
) -> Maybe[AttributionReport]:
    """Average a post-hoc method over the records that chose ``action``.

    At most ``max_records`` records are used, picked by a seeded draw. GradSHAP
    draws its baselines from the whole record set.
    """
    matching = [record for record in records if record.action == action]
    if not matching:
        return Nothing
    rng = np.random.default_rng(seed)
    if len(matching) > max_records:
        keep = np.sort(rng.choice(len(matching), size=max_records, replace=False))
        matching = [matching[i] for i in keep]
    observations = np.stack([record.observation for record in matching])

    if method == "ixg":
        values = (observations * input_gradients(policy, observations, action)).mean(axis=0)
    elif method == "ig":
        values = np.mean(
            [attribution_ig(policy, obs, action, steps=ig_steps).values for obs in observations], axis=0
        )
    elif method == "gradshap":
        pool = np.stack([record.observation for record in records])
        values = np.mean(
            [
                attribution_gradshap(
                    policy, obs, action, pool, n_samples=gradshap_samples, noise=gradshap_noise, seed=seed + i
                ).values
                for i, obs in enumerate(observations)
            ],
            axis=0,
        )
    else:
        raise ValueError(f"Unsupported global attribution method: {method}")
    return Some(AttributionReport(method, action, values, baseline=f"mean over {len(matching)} records"))


@dataclass(slots=True)
class PairComparison:
    left: str
    right: str
    sign_agreement: float | None
    rank_correlation: float | None


@dataclass(slots=True)
class AttributionComparison:
    action: int
    methods: list[str]
    feature_names: list[str]
    table: list[list[float]]
    pairs: list[PairComparison] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "action": self.action,
            "methods": self.methods,
            "feature_names": self.feature_names,
            "table": self.table,
            "pairs": [
                {
                    "left": pair.left,
                    "right": pair.right,
                    "sign_agreement": pair.sign_agreement,
                    "rank_correlation": pair.rank_correlation,
                }
                for pair in self.pairs
            ],
        }


def sign_agreement(left: FloatArray, right: FloatArray) -> float | None:
    """Share of features with equal sign, ignoring features that are exactly zero in either."""
    mask = (np.sign(left) != 0) & (np.sign(right) != 0)
    if not mask.any():
        return None
    return float(np.mean(np.sign(left[mask]) == np.sign(right[mask])))


def rank_correlation(left: FloatArray, right: FloatArray) -> float | None:
    result = spearmanr(left, right)
    value = float(result.statistic)
    return None if np.isnan(value) else value


def attribution_compare(
    reports: Sequence[AttributionReport], feature_names: list[str] | None = None
) -> AttributionComparison:
    """Per-feature table across methods plus pairwise sign agreement and Spearman correlation."""
    if len(reports) < 2:
        raise ValueError("attribution_compare needs at least two reports")
    actions = {report.action for report in reports}
    if len(actions) != 1:
        raise ValueError(f"reports refer to different actions: {sorted(actions)}")
    width = reports[0].values.shape[0]
    if any(report.values.shape[0] != width for report in reports):
        raise ValueError("reports have different feature counts")
    names = feature_names or [f"x{j}" for j in range(width)]
    table = [[float(report.values[j]) for report in reports] for j in range(width)]
    pairs = [
        PairComparison(
            left=reports[i].method,
            right=reports[j].method,
            sign_agreement=sign_agreement(reports[i].values, reports[j].values),
            rank_correlation=rank_correlation(reports[i].values, reports[j].values),
        )
        for i in range(len(reports))
        for j in range(i + 1, len(reports))
    ]
    return AttributionComparison(
        action=reports[0].action,
        methods=[report.method for report in reports],
        feature_names=names,
        table=table,
        pairs=pairs,
    )
