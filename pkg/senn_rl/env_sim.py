"""Mobile network simulator: moving UEs, static base stations, toggle actions.

Each UE observes ``[conn_status(n), snr(n), ue_utility, ues_per_bs(n), bs_utility(n)]``
and picks one action in ``{0..n}``: 0 does nothing, ``k`` toggles its connection
to base station ``k``. Rewards are per-UE QoE in [-20, 20].
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from senn_rl.config import SimConfig
from senn_rl.errors import EnvError

SNR_EPS = 1e-6
RATE_EPS = 1e-9
MAX_TURN_RAD = math.radians(30.0)
QOE_LIMIT = 20.0


def okumura_hata_db(distance_m: float, carrier_mhz: float, bs_height: float, ue_height: float) -> float:
    """Okumura-Hata urban path loss with the small/medium-city antenna correction."""
    log_f = math.log10(carrier_mhz)
    d_km = max(float(distance_m), 1.0) / 1000.0
    a_hm = (1.1 * log_f - 0.7) * ue_height - (1.56 * log_f - 0.8)
    return (
        69.55
        + 26.16 * log_f
        - 13.82 * math.log10(bs_height)
        - a_hm
        + (44.9 - 6.55 * math.log10(bs_height)) * math.log10(d_km)
    )


def path_loss_db(ue_pos: ArrayLike, bs_pos: ArrayLike, config: SimConfig) -> float:
    distance = float(np.linalg.norm(np.asarray(ue_pos, dtype=float) - np.asarray(bs_pos, dtype=float)))
    return okumura_hata_db(distance, config.carrier_mhz, config.bs_height, config.ue_height)


def snr_db(ue_pos: ArrayLike, bs_pos: ArrayLike, config: SimConfig) -> float:
    return config.tx_power_dbm - path_loss_db(ue_pos, bs_pos, config) - config.noise_dbm


def normalize_snr(value_db: float, config: SimConfig) -> float:
    """Linear min-max map of dB onto the open unit interval."""
    low, high = config.snr_db_range
    scaled = (value_db - low) / (high - low)
    return float(min(max(scaled, SNR_EPS), 1.0 - SNR_EPS))


def snr_observed(ue_pos: ArrayLike, bs_pos: ArrayLike, config: SimConfig) -> float:
    return normalize_snr(snr_db(ue_pos, bs_pos, config), config)


def qoe(rate: float, config: SimConfig) -> float:
    """Logarithmic quality of experience; 0 at the target rate, -20 at zero rate."""
    if rate < 0:
        raise EnvError(f"rate must be nonnegative, got {rate}")
    value = config.qoe_scale * math.log10(max(rate, RATE_EPS) / config.target_rate)
    return float(min(max(value, -QOE_LIMIT), QOE_LIMIT))


def observation_bounds(config: SimConfig) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Per-feature lower and upper limits of a valid observation."""
    n = config.n_bs
    low = np.concatenate([np.zeros(n), np.zeros(n), [-1.0], np.zeros(n), -np.ones(n)])
    high = np.concatenate([np.ones(n), np.ones(n), [1.0], np.full(n, float(config.n_ue)), np.ones(n)])
    return low, high


def feature_names(n_bs: int) -> list[str]:
    return (
        [f"conn_bs{j + 1}" for j in range(n_bs)]
        + [f"snr_bs{j + 1}" for j in range(n_bs)]
        + ["ue_utility"]
        + [f"ues_at_bs{j + 1}" for j in range(n_bs)]
        + [f"util_bs{j + 1}" for j in range(n_bs)]
    )


def action_names(n_bs: int) -> list[str]:
    return ["no_action"] + [f"toggle_bs{j + 1}" for j in range(n_bs)]


@dataclass(slots=True)
class UEState:
    position: NDArray[np.float64]
    heading: NDArray[np.float64]
    connections: NDArray[np.bool_]


@dataclass(slots=True)
class StepResult:
    observations: NDArray[np.float64]
    rewards: NDArray[np.float64]
    done: bool
    info: dict[str, Any] = field(default_factory=dict)


class MobileEnv:
    """Single simulator instance; one writer at a time."""

    def __init__(self, config: SimConfig) -> None:
        issues = config.validate()
        if issues:
            raise EnvError("; ".join(f"{issue.field}: {issue.message}" for issue in issues))
        self.config = config
        self.bs_positions = np.asarray(config.bs_positions, dtype=np.float64)
        self._rng = np.random.default_rng(config.seed)
        self.positions = np.zeros((config.n_ue, 2))
        self.headings = np.zeros((config.n_ue, 2))
        self.connections = np.zeros((config.n_ue, config.n_bs), dtype=bool)
        self.utilities = np.full(config.n_ue, -QOE_LIMIT)
        self._snr_db = np.zeros((config.n_ue, config.n_bs))
        self.t = 0
        self._started = False

    @property
    def done(self) -> bool:
        return self._started and self.t >= self.config.episode_length

    def ue_state(self, ue: int) -> UEState:
        return UEState(self.positions[ue].copy(), self.headings[ue].copy(), self.connections[ue].copy())

    def reset(self, seed: int | None = None) -> NDArray[np.float64]:
        """Start an episode; returns observations shaped (n_ue, obs_dim)."""
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        cfg = self.config
        self.positions = self._rng.uniform((0.0, 0.0), (cfg.width, cfg.height), size=(cfg.n_ue, 2))
        angles = self._rng.uniform(0.0, 2.0 * math.pi, size=cfg.n_ue)
        self.headings = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        self.connections = np.zeros((cfg.n_ue, cfg.n_bs), dtype=bool)
        self.t = 0
        self._started = True
        self._snr_db = self._snr_db_matrix()
        rates = self._allocate()
        self.utilities = np.array([qoe(rate, cfg) for rate in rates])
        return self._observe()

    def step(self, actions: Sequence[int] | NDArray[np.int64]) -> StepResult:
        cfg = self.config
        if not self._started:
            raise EnvError("step called before reset")
        if self.done:
            raise EnvError("step called after the episode finished")
        chosen = np.asarray(actions)
        if chosen.shape != (cfg.n_ue,):
            raise EnvError(f"expected {cfg.n_ue} actions, got shape {chosen.shape}")
        if not np.issubdtype(chosen.dtype, np.integer) or chosen.min() < 0 or chosen.max() > cfg.n_bs:
            raise EnvError(f"actions must be integers in 0..{cfg.n_bs}, got {chosen.tolist()}")

        for ue, action in enumerate(chosen.tolist()):
            if action > 0:
                self.connections[ue, action - 1] = not self.connections[ue, action - 1]
        self._move()
        self._snr_db = self._snr_db_matrix()
        rates = self._allocate()
        self.utilities = np.array([qoe(rate, cfg) for rate in rates])
        rewards = (
            np.full(cfg.n_ue, float(self.utilities.mean())) if cfg.aggregate_reward else self.utilities.copy()
        )
        self.t += 1
        return StepResult(
            observations=self._observe(),
            rewards=rewards,
            done=self.t >= cfg.episode_length,
            info={"rates": rates, "t": self.t},
        )

    def snr_observed(self, ue: int, bs: int) -> float:
        return snr_observed(self.positions[ue], self.bs_positions[bs], self.config)

    def _move(self) -> None:
        cfg = self.config
        turns = self._rng.uniform(-MAX_TURN_RAD, MAX_TURN_RAD, size=cfg.n_ue)
        cos, sin = np.cos(turns), np.sin(turns)
        hx, hy = self.headings[:, 0].copy(), self.headings[:, 1].copy()
        self.headings = np.stack([cos * hx - sin * hy, sin * hx + cos * hy], axis=1)
        self.headings /= np.linalg.norm(self.headings, axis=1, keepdims=True)
        self.positions = self.positions + cfg.ue_speed * self.headings
        for axis, limit in ((0, cfg.width), (1, cfg.height)):
            below = self.positions[:, axis] < 0.0
            above = self.positions[:, axis] > limit
            self.positions[below, axis] = -self.positions[below, axis]
            self.positions[above, axis] = 2.0 * limit - self.positions[above, axis]
            self.headings[below | above, axis] *= -1.0
            self.positions[:, axis] = np.clip(self.positions[:, axis], 0.0, limit)

    def _snr_db_matrix(self) -> NDArray[np.float64]:
        return np.array(
            [[snr_db(ue_pos, bs_pos, self.config) for bs_pos in self.bs_positions] for ue_pos in self.positions]
        )

    def _allocate(self) -> NDArray[np.float64]:
        """Equal bandwidth split per BS; rates summed over a UE's connections."""
        cfg = self.config
        loads = self.connections.sum(axis=0)
        shares = np.where(loads > 0, cfg.bandwidth_hz / np.maximum(loads, 1), 0.0)
        capacity = np.log2(1.0 + 10.0 ** (self._snr_db / 10.0))
        return (self.connections * shares[None, :] * capacity).sum(axis=1)

    def _observe(self) -> NDArray[np.float64]:
        cfg = self.config
        snr = np.array(
            [[normalize_snr(value, cfg) for value in row] for row in self._snr_db]
        )
        scaled = self.utilities / QOE_LIMIT
        loads = self.connections.sum(axis=0).astype(np.float64)
        bs_utility = np.array(
            [scaled[self.connections[:, j]].mean() if loads[j] > 0 else 0.0 for j in range(cfg.n_bs)]
        )
        rows = [
            np.concatenate(
                [self.connections[ue].astype(np.float64), snr[ue], [scaled[ue]], loads, bs_utility]
            )
            for ue in range(cfg.n_ue)
        ]
        return np.stack(rows)


class VectorEnv:
    """Independent simulators seeded ``seed + i`` that reset themselves when done.

    Episode ends are returned as ``dones``; the observation handed back for a
    finished environment is the first observation of its next episode.
    """

    def __init__(self, config: SimConfig, n_envs: int, seed: int) -> None:
        if n_envs < 1:
            raise EnvError("n_envs must be >= 1")
        self.config = config
        self.envs = [MobileEnv(config) for _ in range(n_envs)]
        self.seed = seed
        self.episode_returns = np.zeros(n_envs)
        self.completed_returns: list[float] = []
        self.observations: NDArray[np.float64] | None = None

    @property
    def n_envs(self) -> int:
        return len(self.envs)

    def reset(self) -> NDArray[np.float64]:
        self.episode_returns[:] = 0.0
        self.observations = np.stack([env.reset(seed=self.seed + i) for i, env in enumerate(self.envs)])
        return self.observations

    def step(
        self, actions: NDArray[np.int64]
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.bool_]]:
        observations, rewards, dones = [], [], []
        for i, env in enumerate(self.envs):
            try:
                result = env.step(actions[i])
            except EnvError as exc:
                raise EnvError(f"environment {i} (seed {self.seed + i}) step {env.t}: {exc}") from exc
            self.episode_returns[i] += float(result.rewards.mean())
            obs = result.observations
            if result.done:
                self.completed_returns.append(float(self.episode_returns[i]))
                self.episode_returns[i] = 0.0
                obs = env.reset()
            observations.append(obs)
            rewards.append(result.rewards)
            dones.append(result.done)
        self.observations = np.stack(observations)
        return self.observations, np.stack(rewards), np.asarray(dones)
