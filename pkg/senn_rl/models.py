"""Typed records shared by evaluation, explanation, persistence and commands."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray

from senn_rl.errors import TraceFormatError

DECOMPOSITION_TOLERANCE = 1e-8


def _array(values: Any, ndim: int, name: str) -> NDArray[np.float64]:
    try:
        array = np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise TraceFormatError(f"{name} is not numeric: {exc}") from exc
    if array.ndim != ndim:
        raise TraceFormatError(f"{name} must be {ndim}-D, got shape {array.shape}")
    return array


@dataclass(slots=True)
class DecisionRecord:
    """One decision: observation, relevance, effects, logits and the chosen action."""

    observation: NDArray[np.float64]
    relevance: NDArray[np.float64]
    logits: NDArray[np.float64]
    bias: NDArray[np.float64]
    action: int
    episode: int = 0
    step: int = 0
    ue: int = 0
    effects: NDArray[np.float64] = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self) -> None:
        m, n = self.relevance.shape
        if self.effects.size == 0:
            self.effects = self.relevance * self.observation[None, :]
        if self.observation.shape != (n,) or self.logits.shape != (m,) or self.bias.shape != (m,):
            raise TraceFormatError(
                f"record dimensions disagree: relevance {self.relevance.shape}, "
                f"observation {self.observation.shape}, logits {self.logits.shape}"
            )
        if self.effects.shape != (m, n):
            raise TraceFormatError(f"effects shape {self.effects.shape} != {(m, n)}")
        if not 0 <= self.action < m:
            raise TraceFormatError(f"action {self.action} outside 0..{m - 1}")
        gap = np.max(np.abs(self.effects.sum(axis=1) + self.bias - self.logits))
        if gap > DECOMPOSITION_TOLERANCE * max(1.0, float(np.max(np.abs(self.logits)))):
            raise TraceFormatError(f"effects do not decompose the logits (gap {gap:.3e})")

    @property
    def shape(self) -> tuple[int, int]:
        m, n = self.relevance.shape
        return int(m), int(n)

    def chosen_relevance(self) -> NDArray[np.float64]:
        return self.relevance[self.action]

    def to_dict(self) -> dict[str, Any]:
        return {
            "episode": self.episode,
            "step": self.step,
            "ue": self.ue,
            "action": self.action,
            "observation": self.observation.tolist(),
            "relevance": self.relevance.tolist(),
            "effects": self.effects.tolist(),
            "logits": self.logits.tolist(),
            "bias": self.bias.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> DecisionRecord:
        try:
            return cls(
                observation=_array(payload["observation"], 1, "observation"),
                relevance=_array(payload["relevance"], 2, "relevance"),
                logits=_array(payload["logits"], 1, "logits"),
                bias=_array(payload["bias"], 1, "bias"),
                action=int(payload["action"]),
                episode=int(payload.get("episode", 0)),
                step=int(payload.get("step", 0)),
                ue=int(payload.get("ue", 0)),
                effects=_array(payload["effects"], 2, "effects"),
            )
        except KeyError as exc:
            raise TraceFormatError(f"record is missing field {exc}") from exc


@dataclass(slots=True)
class EvalStats:
    """Greedy evaluation outcome; an episode's return is the sum of its mean per-UE rewards."""

    episode_returns: list[float]
    timesteps: int
    seed: int
    policy: str

    @property
    def mean(self) -> float:
        return float(np.mean(self.episode_returns)) if self.episode_returns else 0.0

    @property
    def std(self) -> float:
        return float(np.std(self.episode_returns)) if self.episode_returns else 0.0

    def to_dict(self) -> dict[str, Any]:
        payload = asdict(self)
        payload.update(mean=self.mean, std=self.std, n_episodes=len(self.episode_returns))
        return payload


@dataclass(slots=True)
class EffectDistribution:
    """Per-feature effect samples for every record whose chosen action is ``action``."""

    action: int
    feature_names: list[str]
    samples: NDArray[np.float64]

    @property
    def empty(self) -> bool:
        return self.samples.shape[0] == 0

    @property
    def count(self) -> int:
        return int(self.samples.shape[0])

    @property
    def means(self) -> NDArray[np.float64] | None:
        """Per-feature means, ``None`` when no record took this action."""
        return None if self.empty else self.samples.mean(axis=0)

    def to_dict(self) -> dict[str, Any]:
        means = self.means
        return {
            "action": self.action,
            "empty": self.empty,
            "count": self.count,
            "feature_names": self.feature_names,
            "means": None if means is None else means.tolist(),
            "samples": self.samples.tolist(),
        }


@dataclass(slots=True)
class ClusterModel:
    k: int
    centroids: NDArray[np.float64]
    assignments: NDArray[np.int64]
    distortion: float
    iterations: int
    contingency: NDArray[np.int64] | None = None
    silhouette: float | None = None
    davies_bouldin: float | None = None
    purity: NDArray[np.float64] | None = None
    cluster_sets: dict[int, list[int]] = field(default_factory=dict)
    importance: dict[int, NDArray[np.float64] | None] = field(default_factory=dict)

    @property
    def sizes(self) -> NDArray[np.int64]:
        return np.bincount(self.assignments, minlength=self.k)

    @property
    def mean_purity(self) -> float | None:
        if self.purity is None:
            return None
        sizes = self.sizes
        return float(np.sum(self.purity * sizes) / max(int(sizes.sum()), 1))

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "sizes": self.sizes.tolist(),
            "distortion": self.distortion,
            "iterations": self.iterations,
            "contingency": None if self.contingency is None else self.contingency.tolist(),
            "silhouette": self.silhouette,
            "davies_bouldin": self.davies_bouldin,
            "purity": None if self.purity is None else self.purity.tolist(),
            "mean_purity": self.mean_purity,
            "cluster_sets": {str(a): members for a, members in self.cluster_sets.items()},
            "importance": {
                str(a): None if vector is None else vector.tolist() for a, vector in self.importance.items()
            },
        }


@dataclass(slots=True)
class LipschitzEstimate:
    per_anchor: NDArray[np.float64]
    eps_ball: float
    iterations: int
    step_size: float
    seed: int

    @property
    def anchor_count(self) -> int:
        return int(self.per_anchor.size)

    @property
    def global_max(self) -> float:
        return float(self.per_anchor.max()) if self.per_anchor.size else 0.0

    @property
    def mean(self) -> float:
        return float(self.per_anchor.mean()) if self.per_anchor.size else 0.0

    @property
    def std(self) -> float:
        return float(self.per_anchor.std()) if self.per_anchor.size else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_anchor": self.per_anchor.tolist(),
            "global_max": self.global_max,
            "mean": self.mean,
            "std": self.std,
            "anchor_count": self.anchor_count,
            "eps_ball": self.eps_ball,
            "iterations": self.iterations,
            "step_size": self.step_size,
            "seed": self.seed,
        }


ATTRIBUTION_METHODS = ("ixg", "ig", "gradshap", "effect_mean", "cluster_importance")


@dataclass(slots=True)
class AttributionReport:
    method: str
    action: int
    values: NDArray[np.float64]
    baseline: str = ""

    def __post_init__(self) -> None:
        if self.method not in ATTRIBUTION_METHODS:
            raise ValueError(f"Unknown attribution method: {self.method}")
        if self.values.ndim != 1:
            raise ValueError(f"attribution vector must be 1-D, got shape {self.values.shape}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "action": self.action,
            "values": self.values.tolist(),
            "baseline": self.baseline,
        }
