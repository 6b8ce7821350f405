"""Run configuration: dataclasses, schema validation and loading."""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field, fields
from os import environ
from pathlib import Path
from typing import Any

from jsonschema import Draft202012Validator
from returns.result import Failure, Result, Success

from senn_rl.baselines import DISCONNECT_THRESHOLD
from senn_rl.errors import ConfigError
from senn_rl.utils import json_dumps, sha256_text

SCHEMA_DIR = Path(__file__).parent.parent / "schemas"
RUN_CONFIG_SCHEMA = SCHEMA_DIR / "run-config.schema.json"
ACTOR_KINDS = ("senn", "senn-nobias", "dnn")


@dataclass(slots=True)
class ConfigIssue:
    """Single configuration problem."""

    field: str
    message: str
    value: Any = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _default_bs_positions() -> list[list[float]]:
    return [[200.0, 250.0], [600.0, 250.0], [400.0, 600.0]]


@dataclass(slots=True)
class SimConfig:
    """Mobile network scenario. Distances in meters, one step is one second."""

    width: float = 800.0
    height: float = 800.0
    n_bs: int = 3
    n_ue: int = 3
    bs_positions: list[list[float]] = field(default_factory=_default_bs_positions)
    ue_speed: float = 10.0
    episode_length: int = 100
    carrier_mhz: float = 1500.0
    bs_height: float = 50.0
    ue_height: float = 1.5
    bandwidth_hz: float = 9e6
    tx_power_dbm: float = 40.0
    noise_dbm: float = -95.0
    snr_db_range: list[float] = field(default_factory=lambda: [0.0, 60.0])
    qoe_scale: float = 10.0
    target_rate: float = 2e6
    aggregate_reward: bool = False
    seed: int = 0

    @property
    def n_actions(self) -> int:
        return self.n_bs + 1

    @property
    def obs_dim(self) -> int:
        return 4 * self.n_bs + 1

    def validate(self) -> list[ConfigIssue]:
        issues: list[ConfigIssue] = []
        if self.width <= 0 or self.height <= 0:
            issues.append(ConfigIssue("sim.width", "area must have positive size", [self.width, self.height]))
        if self.n_bs < 1:
            issues.append(ConfigIssue("sim.n_bs", "at least one base station is required", self.n_bs))
        if self.n_ue < 1:
            issues.append(ConfigIssue("sim.n_ue", "at least one UE is required", self.n_ue))
        if len(self.bs_positions) != self.n_bs:
            issues.append(
                ConfigIssue("sim.bs_positions", f"expected {self.n_bs} positions", len(self.bs_positions))
            )
        for i, position in enumerate(self.bs_positions):
            if len(position) != 2:
                issues.append(ConfigIssue(f"sim.bs_positions.{i}", "position must be a 2-D point", position))
                continue
            x, y = position
            if not (0.0 <= x <= self.width and 0.0 <= y <= self.height):
                issues.append(ConfigIssue(f"sim.bs_positions.{i}", "position outside the area", position))
        if self.episode_length < 1:
            issues.append(ConfigIssue("sim.episode_length", "must be >= 1", self.episode_length))
        if len(self.snr_db_range) != 2 or self.snr_db_range[0] >= self.snr_db_range[1]:
            issues.append(ConfigIssue("sim.snr_db_range", "min must be below max", self.snr_db_range))
        if self.ue_speed < 0:
            issues.append(ConfigIssue("sim.ue_speed", "must be nonnegative", self.ue_speed))
        for name in ("carrier_mhz", "bs_height", "ue_height", "bandwidth_hz", "qoe_scale", "target_rate"):
            if getattr(self, name) <= 0:
                issues.append(ConfigIssue(f"sim.{name}", "must be positive", getattr(self, name)))
        return issues

    def fingerprint(self) -> str:
        """sha256 over the deterministic JSON of the scenario, seed excluded."""
        payload = asdict(self)
        payload.pop("seed")
        return sha256_text(json_dumps(payload))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(slots=True)
class PpoConfig:
    total_timesteps: int = 200_000
    n_envs: int = 4
    horizon: int = 128
    minibatch_size: int = 256
    epochs: int = 10
    clip_eps: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    learning_rate: float = 3e-4
    vf_coef: float = 0.5
    ent_coef: float = 0.01
    robustness_lambda: float = 0.001
    max_grad_norm: float = 0.5
    hidden_sizes: list[int] = field(default_factory=lambda: [64, 64])
    actor: str = "senn"
    eval_interval: int = 20_000
    eval_timesteps: int = 3_000
    seed: int = 0

    def validate(self) -> list[ConfigIssue]:
        issues: list[ConfigIssue] = []
        if self.clip_eps <= 0:
            issues.append(ConfigIssue("ppo.clip_eps", "must be > 0", self.clip_eps))
        for name in ("gamma", "gae_lambda"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                issues.append(ConfigIssue(f"ppo.{name}", "must lie in [0, 1]", value))
        for name in ("n_envs", "horizon", "minibatch_size", "epochs", "total_timesteps"):
            if getattr(self, name) < 1:
                issues.append(ConfigIssue(f"ppo.{name}", "must be >= 1", getattr(self, name)))
        if self.robustness_lambda < 0:
            issues.append(ConfigIssue("ppo.robustness_lambda", "must be nonnegative", self.robustness_lambda))
        if self.actor not in ACTOR_KINDS:
            issues.append(ConfigIssue("ppo.actor", f"must be one of {', '.join(ACTOR_KINDS)}", self.actor))
        if self.learning_rate <= 0:
            issues.append(ConfigIssue("ppo.learning_rate", "must be > 0", self.learning_rate))
        return issues

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(slots=True)
class ExplainConfig:
    eval_timesteps: int = 30_000
    k: int = 14
    k_min: int = 6
    k_max: int = 20
    tau: float = 0.6
    cluster_target: str = "chosen_row"
    silhouette_sample: int = 2_000
    ig_steps: int = 128
    gradshap_samples: int = 512
    gradshap_noise: float = 0.01
    heuristic_threshold: float = DISCONNECT_THRESHOLD
    seed: int = 0

    def validate(self) -> list[ConfigIssue]:
        issues: list[ConfigIssue] = []
        if not 0.0 < self.tau < 1.0:
            issues.append(ConfigIssue("explain.tau", "must lie in (0, 1)", self.tau))
        if self.k < 1 or self.k_min < 1 or self.k_min > self.k_max:
            issues.append(ConfigIssue("explain.k", "k >= 1 and k_min <= k_max required", [self.k, self.k_min, self.k_max]))
        if self.cluster_target not in ("chosen_row", "full_matrix"):
            issues.append(ConfigIssue("explain.cluster_target", "must be chosen_row or full_matrix", self.cluster_target))
        if self.ig_steps < 16:
            issues.append(ConfigIssue("explain.ig_steps", "must be >= 16", self.ig_steps))
        if self.gradshap_samples < 8:
            issues.append(ConfigIssue("explain.gradshap_samples", "must be >= 8", self.gradshap_samples))
        if not 0.0 <= self.heuristic_threshold <= 1.0:
            issues.append(ConfigIssue("explain.heuristic_threshold", "must lie in [0, 1]", self.heuristic_threshold))
        return issues

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(slots=True)
class LipschitzConfig:
    anchors: int = 800
    eps_ball: float = 0.5
    iterations: int = 40
    step_size: float = 0.01
    seed: int = 0

    def validate(self) -> list[ConfigIssue]:
        issues: list[ConfigIssue] = []
        if self.eps_ball <= 0:
            issues.append(ConfigIssue("lipschitz.eps_ball", "must be > 0", self.eps_ball))
        if self.anchors < 1:
            issues.append(ConfigIssue("lipschitz.anchors", "must be >= 1", self.anchors))
        if self.iterations < 0 or self.step_size <= 0:
            issues.append(
                ConfigIssue("lipschitz.iterations", "iterations >= 0 and step_size > 0 required", [self.iterations, self.step_size])
            )
        return issues

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(slots=True)
class RunConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    lipschitz: LipschitzConfig = field(default_factory=LipschitzConfig)

    def validate(self) -> list[ConfigIssue]:
        return self.sim.validate() + self.ppo.validate() + self.explain.validate() + self.lipschitz.validate()

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> RunConfig:
        """Build from an already validated mapping; absent keys keep defaults."""
        return cls(
            sim=_build(SimConfig, payload.get("sim", {})),
            ppo=_build(PpoConfig, payload.get("ppo", {})),
            explain=_build(ExplainConfig, payload.get("explain", {})),
            lipschitz=_build(LipschitzConfig, payload.get("lipschitz", {})),
        )


def _build(kind: type[Any], values: Mapping[str, Any]) -> Any:
    known = {item.name for item in fields(kind)}
    return kind(**{key: value for key, value in values.items() if key in known})


def load_config_schema(schema_path: Path | str | None = None) -> Result[dict[str, Any], Exception]:
    try:
        path = Path(schema_path) if schema_path else RUN_CONFIG_SCHEMA
        with path.open("r", encoding="utf-8") as handle:
            return Success(json.load(handle))
    except Exception as exc:
        return Failure(exc)


def validate_config_payload(payload: Mapping[str, Any], schema: dict[str, Any]) -> list[ConfigIssue]:
    """Collect every schema violation as a ConfigIssue."""
    validator = Draft202012Validator(schema)
    return [
        ConfigIssue(
            field=".".join(str(part) for part in error.path) or "root",
            message=error.message,
            value=error.instance,
        )
        for error in sorted(validator.iter_errors(dict(payload)), key=lambda e: list(map(str, e.path)))
    ]


def parse_run_config(payload: Mapping[str, Any], schema_path: Path | str | None = None) -> Result[RunConfig, Exception]:
    """Validate a raw mapping against the schema and the dataclass invariants."""
    schema_result = load_config_schema(schema_path)
    if isinstance(schema_result, Failure):
        return schema_result
    issues = validate_config_payload(payload, schema_result.unwrap())
    if issues:
        return Failure(ConfigError("Run config failed schema validation", [issue.to_dict() for issue in issues]))

    config = RunConfig.from_dict(payload)
    issues = config.validate()
    if issues:
        return Failure(ConfigError("Run config violates invariants", [issue.to_dict() for issue in issues]))
    return Success(config)


def load_run_config(path: Path | str | None = None) -> Result[RunConfig, Exception]:
    """Load a JSON run config; ``None`` yields the desk-scale defaults."""
    if path is None:
        return parse_run_config({})
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        return Failure(ConfigError(f"Unable to read config {path}: {exc}"))
    if not isinstance(payload, dict):
        return Failure(ConfigError(f"Config {path} must hold a JSON object"))
    return parse_run_config(payload)


def default_out_dir(env: Mapping[str, str] | None = None) -> Path:
    values = env if env is not None else environ
    return Path(values.get("SENN_RL_OUT_DIR", "runs"))


def acceptance_enabled(env: Mapping[str, str] | None = None) -> bool:
    values = env if env is not None else environ
    return values.get("SENN_RL_ACCEPTANCE") == "1"
