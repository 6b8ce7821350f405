"""Tests for the mobile network simulator."""

from __future__ import annotations

import math

import numpy as np
import pytest

from senn_rl.config import SimConfig
from senn_rl.env_sim import (
    MobileEnv,
    VectorEnv,
    action_names,
    feature_names,
    observation_bounds,
    okumura_hata_db,
    path_loss_db,
    qoe,
    snr_observed,
)
from senn_rl.errors import EnvError


def test_okumura_hata_at_one_kilometre() -> None:
    """At 1 km the distance term vanishes and only the fixed terms remain."""
    log_f = math.log10(1500.0)
    a_hm = (1.1 * log_f - 0.7) * 1.5 - (1.56 * log_f - 0.8)
    expected = 69.55 + 26.16 * log_f - 13.82 * math.log10(50.0) - a_hm
    assert okumura_hata_db(1000.0, 1500.0, 50.0, 1.5) == pytest.approx(expected, abs=1e-12)


def test_path_loss_grows_with_distance_and_clamps_below_one_metre() -> None:
    """Loss is monotone in distance; distances under 1 m count as 1 m."""
    config = SimConfig()
    bs = [400.0, 400.0]
    losses = [path_loss_db([400.0 + d, 400.0], bs, config) for d in (10.0, 50.0, 200.0, 390.0)]
    assert losses == sorted(losses)
    assert path_loss_db(bs, bs, config) == path_loss_db([400.5, 400.0], bs, config)


def test_snr_observed_stays_inside_unit_interval() -> None:
    """Normalized SNR is clamped into the open unit interval."""
    config = SimConfig()
    near = snr_observed([200.0, 250.0], [200.0, 250.0], config)
    far = snr_observed([0.0, 0.0], [800.0, 800.0], config)
    assert 0.0 < far < near < 1.0


def test_qoe_range_and_target() -> None:
    """QoE is 0 at the target rate and saturates at +-20."""
    config = SimConfig()
    assert qoe(config.target_rate, config) == pytest.approx(0.0)
    assert qoe(0.0, config) == -20.0
    assert qoe(1e30, config) == 20.0
    assert qoe(config.target_rate * 10.0, config) == pytest.approx(10.0)
    with pytest.raises(EnvError):
        qoe(-1.0, config)


def test_reset_returns_disconnected_observations() -> None:
    """Every UE starts disconnected with the minimum utility."""
    config = SimConfig()
    env = MobileEnv(config)
    obs = env.reset(seed=3)

    assert obs.shape == (config.n_ue, config.obs_dim)
    n = config.n_bs
    np.testing.assert_array_equal(obs[:, :n], 0.0)
    np.testing.assert_array_equal(obs[:, 2 * n], -1.0)
    np.testing.assert_array_equal(obs[:, 2 * n + 1 :], 0.0)
    assert len(feature_names(n)) == config.obs_dim
    assert action_names(n) == ["no_action", "toggle_bs1", "toggle_bs2", "toggle_bs3"]


def test_toggle_actions_connect_and_disconnect() -> None:
    """Action k flips the connection to base station k; 0 leaves it unchanged."""
    config = SimConfig()
    env = MobileEnv(config)
    env.reset(seed=0)

    result = env.step(np.array([1, 0, 3]))
    obs = result.observations
    np.testing.assert_array_equal(obs[0, :3], [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(obs[1, :3], [0.0, 0.0, 0.0])
    np.testing.assert_array_equal(obs[2, :3], [0.0, 0.0, 1.0])
    np.testing.assert_array_equal(obs[0, 7:10], [1.0, 0.0, 1.0])
    assert result.rewards.shape == (3,)
    assert np.all(np.abs(result.rewards) <= 20.0)
    assert result.rewards[1] == -20.0

    result = env.step(np.array([1, 0, 0]))
    np.testing.assert_array_equal(result.observations[0, :3], [0.0, 0.0, 0.0])


def test_aggregate_reward_gives_every_ue_the_mean() -> None:
    """With aggregate rewards all UEs receive the mean QoE."""
    env = MobileEnv(SimConfig(aggregate_reward=True))
    env.reset(seed=1)
    rewards = env.step(np.array([1, 2, 0])).rewards
    assert np.all(rewards == rewards[0])


def test_episode_ends_and_illegal_steps_raise() -> None:
    """Stepping past the episode end or with bad actions is an EnvError."""
    env = MobileEnv(SimConfig(episode_length=2))
    with pytest.raises(EnvError, match="before reset"):
        env.step(np.zeros(3, dtype=np.int64))
    env.reset(seed=0)
    with pytest.raises(EnvError):
        env.step(np.array([0, 0, 4]))
    with pytest.raises(EnvError):
        env.step(np.array([0, 0]))
    assert not env.step(np.zeros(3, dtype=np.int64)).done
    assert env.step(np.zeros(3, dtype=np.int64)).done
    with pytest.raises(EnvError, match="finished"):
        env.step(np.zeros(3, dtype=np.int64))


def test_same_seed_same_trajectory() -> None:
    """The simulator is a pure function of its seed and actions."""
    config = SimConfig()
    rng = np.random.default_rng(0)
    actions = rng.integers(0, config.n_actions, size=(50, config.n_ue))

    def run() -> np.ndarray:
        env = MobileEnv(config)
        frames = [env.reset(seed=11)]
        for row in actions:
            frames.append(env.step(row).observations)
        return np.stack(frames)

    np.testing.assert_array_equal(run(), run())


def test_ues_stay_inside_the_area_and_observations_inside_bounds() -> None:
    """Reflection keeps positions in the area; features respect their bounds."""
    config = SimConfig(ue_speed=60.0, episode_length=300)
    env = MobileEnv(config)
    env.reset(seed=5)
    low, high = observation_bounds(config)
    rng = np.random.default_rng(1)
    for _ in range(300):
        result = env.step(rng.integers(0, config.n_actions, size=config.n_ue))
        assert np.all(env.positions >= 0.0)
        assert np.all(env.positions[:, 0] <= config.width)
        assert np.all(env.positions[:, 1] <= config.height)
        assert np.all(result.observations >= low - 1e-12)
        assert np.all(result.observations <= high + 1e-12)

    for ue in range(config.n_ue):
        state = env.ue_state(ue)
        assert np.linalg.norm(state.heading) == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_array_equal(state.connections, env.connections[ue])
        state.position[:] = -1.0
        assert np.all(env.positions[ue] >= 0.0)


def test_invalid_config_is_rejected() -> None:
    """Mismatched base station positions fail at construction."""
    with pytest.raises(EnvError, match="bs_positions"):
        MobileEnv(SimConfig(n_bs=2))


def test_vector_env_resets_finished_environments() -> None:
    """Finished environments restart and report their episode return."""
    config = SimConfig(episode_length=3)
    envs = VectorEnv(config, n_envs=2, seed=7)
    obs = envs.reset()
    assert obs.shape == (2, config.n_ue, config.obs_dim)

    dones = None
    for _ in range(3):
        obs, rewards, dones = envs.step(np.zeros((2, config.n_ue), dtype=np.int64))
    assert dones is not None and dones.all()
    assert len(envs.completed_returns) == 2
    assert all(envs.envs[i].t == 0 for i in range(2))
    np.testing.assert_array_equal(envs.episode_returns, 0.0)
    assert envs.completed_returns[0] == pytest.approx(-60.0)
