"""Tests for run configuration loading and validation."""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

from returns.result import Failure, Success

from senn_rl.config import (
    RunConfig,
    SimConfig,
    acceptance_enabled,
    default_out_dir,
    load_run_config,
    parse_run_config,
)
from senn_rl.errors import ConfigError


def test_missing_path_yields_desk_scale_defaults() -> None:
    """No config file means the dataclass defaults."""
    result = load_run_config(None)
    assert isinstance(result, Success)
    config = result.unwrap()
    assert config == RunConfig()
    assert config.ppo.total_timesteps == 200_000
    assert config.sim.obs_dim == 13
    assert config.sim.n_actions == 4


def test_partial_payload_keeps_other_defaults() -> None:
    """Absent sections and keys fall back to defaults."""
    config = parse_run_config({"ppo": {"robustness_lambda": 0.1}}).unwrap()
    assert config.ppo.robustness_lambda == 0.1
    assert config.ppo.clip_eps == 0.2
    assert config.explain == RunConfig().explain


def test_schema_violations_are_collected() -> None:
    """Every schema problem becomes one issue with its field path."""
    result = parse_run_config({"ppo": {"gamma": 1.5, "actor": "lstm"}, "bogus": {}})
    assert isinstance(result, Failure)
    error = result.failure()
    assert isinstance(error, ConfigError)
    fields = {issue["field"] for issue in error.issues}
    assert {"ppo.gamma", "ppo.actor"} <= fields
    assert "root" in fields


def test_invariants_beyond_the_schema() -> None:
    """Cross-field rules such as base-station count are checked after the schema."""
    result = parse_run_config({"sim": {"n_bs": 2}})
    assert isinstance(result, Failure)
    assert any(issue["field"] == "sim.bs_positions" for issue in result.failure().issues)

    inverted = parse_run_config({"explain": {"k_min": 9, "k_max": 3}})
    assert isinstance(inverted, Failure)


def test_heuristic_threshold_is_read_and_bounded() -> None:
    """The heuristic disconnect threshold defaults to 0.2 and must lie in the unit interval."""
    assert RunConfig().explain.heuristic_threshold == 0.2
    config = parse_run_config({"explain": {"heuristic_threshold": 0.35}}).unwrap()
    assert config.explain.heuristic_threshold == 0.35
    result = parse_run_config({"explain": {"heuristic_threshold": 1.5}})
    assert isinstance(result, Failure)
    assert any(issue["field"] == "explain.heuristic_threshold" for issue in result.failure().issues)


def test_unreadable_files_fail_cleanly(tmp_path: Path) -> None:
    """Missing, malformed and non-object files are ConfigErrors."""
    assert isinstance(load_run_config(tmp_path / "missing.json").failure(), ConfigError)
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    assert isinstance(load_run_config(broken).failure(), ConfigError)
    listed = tmp_path / "list.json"
    listed.write_text(json.dumps([1, 2]), encoding="utf-8")
    assert "JSON object" in str(load_run_config(listed).failure())


def test_round_trip_through_dict() -> None:
    """A serialized config parses back to an equal config."""
    config = RunConfig(sim=SimConfig(n_ue=5, aggregate_reward=True))
    assert parse_run_config(config.to_dict()).unwrap() == config


def test_sim_fingerprint_ignores_seed_only() -> None:
    """The scenario fingerprint tracks physics and layout, not the seed."""
    base = SimConfig()
    assert replace(base, seed=9).fingerprint() == base.fingerprint()
    assert replace(base, ue_speed=20.0).fingerprint() != base.fingerprint()


def test_environment_switches() -> None:
    """Output root and acceptance gating come from the environment."""
    assert default_out_dir({}) == Path("runs")
    assert default_out_dir({"SENN_RL_OUT_DIR": "/tmp/x"}) == Path("/tmp/x")
    assert acceptance_enabled({"SENN_RL_ACCEPTANCE": "1"})
    assert not acceptance_enabled({})
