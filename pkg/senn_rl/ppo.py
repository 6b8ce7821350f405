"""PPO with a DNN critic over parallel simulators sharing one policy across UEs."""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray

from senn_rl.autodiff import ParameterSet, Tensor, constant, gradient, mean, no_grad, reshape
from senn_rl.baselines import DISCONNECT_THRESHOLD, heuristic_actions
from senn_rl.config import PpoConfig, RunConfig, SimConfig
from senn_rl.env_sim import MobileEnv, VectorEnv
from senn_rl.errors import NonFiniteLossError
from senn_rl.explain import decision_records
from senn_rl.models import DecisionRecord, EvalStats
from senn_rl.nn import Mlp
from senn_rl.optim import Adam, clip_grad_norm
from senn_rl.senn import ActorPolicy, SennPolicy, actor_loss, build_actor

FloatArray = NDArray[np.float64]


class Critic:
    """Value network; only ever consulted after actions are chosen."""

    def __init__(self, n: int, hidden_sizes: list[int], rng: np.random.Generator) -> None:
        self.n = n
        self.hidden_sizes = list(hidden_sizes)
        self.mlp = Mlp([n, *hidden_sizes, 1], rng, output_gain=1.0)
        self.params = ParameterSet.merge({"mlp": self.mlp.params})

    def value(self, obs: Tensor | FloatArray) -> Tensor:
        tensor = obs if isinstance(obs, Tensor) else constant(np.atleast_2d(obs))
        out = self.mlp(tensor)
        return reshape(out, (out.shape[0],))

    def predict(self, obs: FloatArray) -> FloatArray:
        with no_grad():
            return self.value(obs).data

    def describe(self) -> dict[str, Any]:
        return {"kind": "critic", "n": self.n, "hidden_sizes": self.hidden_sizes}


@dataclass(slots=True)
class RolloutBuffer:
    """Transitions laid out (horizon, n_envs * n_ue); column ``e * n_ue + u`` is UE u of env e."""

    obs: FloatArray
    actions: NDArray[np.int64]
    rewards: FloatArray
    dones: FloatArray
    log_probs: FloatArray
    next_obs: FloatArray
    values: FloatArray | None = None
    last_values: FloatArray | None = None
    advantages: FloatArray | None = None
    returns: FloatArray | None = None

    @property
    def horizon(self) -> int:
        return int(self.rewards.shape[0])

    @property
    def n_agents(self) -> int:
        return int(self.rewards.shape[1])

    def __len__(self) -> int:
        return self.horizon * self.n_agents

    def flat(self, name: str) -> NDArray[Any]:
        array = getattr(self, name)
        if array is None:
            raise ValueError(f"rollout field {name} is not populated")
        return array.reshape((len(self),) + array.shape[2:])


def collect_rollouts(
    policy: ActorPolicy,
    envs: VectorEnv,
    horizon: int,
    rng: np.random.Generator | None,
) -> RolloutBuffer:
    """Step every UE of every environment with the shared policy for ``horizon`` steps.

    ``rng=None`` collects greedily. Values are attached afterwards by ``attach_values``.
    """
    obs = envs.observations if envs.observations is not None else envs.reset()
    n_envs, n_ue, n = obs.shape
    agents = n_envs * n_ue
    obs_buf = np.zeros((horizon, agents, n))
    act_buf = np.zeros((horizon, agents), dtype=np.int64)
    rew_buf = np.zeros((horizon, agents))
    done_buf = np.zeros((horizon, agents))
    logp_buf = np.zeros((horizon, agents))
    for t in range(horizon):
        flat_obs = obs.reshape(agents, n)
        actions, log_probs = policy.act(flat_obs, rng)
        obs_buf[t] = flat_obs
        act_buf[t] = actions
        logp_buf[t] = log_probs
        obs, rewards, dones = envs.step(actions.reshape(n_envs, n_ue))
        rew_buf[t] = rewards.reshape(agents)
        done_buf[t] = np.repeat(dones.astype(np.float64), n_ue)
    return RolloutBuffer(
        obs=obs_buf,
        actions=act_buf,
        rewards=rew_buf,
        dones=done_buf,
        log_probs=logp_buf,
        next_obs=obs.reshape(agents, n).copy(),
    )


def attach_values(buffer: RolloutBuffer, critic: Critic) -> None:
    buffer.values = critic.predict(buffer.flat("obs")).reshape(buffer.horizon, buffer.n_agents)
    buffer.last_values = critic.predict(buffer.next_obs)


def compute_gae(
    buffer: RolloutBuffer, gamma: float, gae_lambda: float, normalize: bool = True
) -> tuple[FloatArray, FloatArray]:
    """GAE advantages and return targets; bootstrapping stops at done flags.

    Return targets use the raw advantages; normalization (zero mean, unit std
    over the rollout) applies to the stored advantages only.
    """
    if buffer.values is None or buffer.last_values is None:
        raise ValueError("compute_gae needs values; call attach_values first")
    advantages = np.zeros_like(buffer.rewards)
    running = np.zeros(buffer.n_agents)
    for t in reversed(range(buffer.horizon)):
        next_values = buffer.last_values if t == buffer.horizon - 1 else buffer.values[t + 1]
        nonterminal = 1.0 - buffer.dones[t]
        delta = buffer.rewards[t] + gamma * next_values * nonterminal - buffer.values[t]
        running = delta + gamma * gae_lambda * nonterminal * running
        advantages[t] = running
    returns = advantages + buffer.values
    if normalize:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-12)
    buffer.advantages = advantages
    buffer.returns = returns
    return advantages, returns


@dataclass(slots=True)
class TrainStats:
    """Minibatch means of every loss component for one update."""

    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    robustness: float = 0.0
    robustness_weighted: float = 0.0
    total_loss: float = 0.0
    approx_kl: float = 0.0
    clip_fraction: float = 0.0
    grad_norm: float = 0.0
    n_minibatches: int = 0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def joint_parameters(policy: ActorPolicy, critic: Critic) -> ParameterSet:
    return ParameterSet.merge({"actor": policy.params, "critic": critic.params})


def ppo_update(
    policy: ActorPolicy,
    critic: Critic,
    buffer: RolloutBuffer,
    config: PpoConfig,
    optimizer: Adam,
    rng: np.random.Generator,
) -> TrainStats:
    """Run the configured epochs of minibatch updates on one rollout."""
    if buffer.advantages is None or buffer.returns is None:
        raise ValueError("ppo_update needs advantages; call compute_gae first")
    obs = buffer.flat("obs")
    actions = buffer.flat("actions")
    old_log_probs = buffer.flat("log_probs")
    advantages = buffer.flat("advantages")
    returns = buffer.flat("returns")
    size = len(buffer)
    batch = min(config.minibatch_size, size)

    sums: dict[str, float] = {}
    count = 0
    for epoch in range(config.epochs):
        order = rng.permutation(size)
        for start in range(0, size, batch):
            idx = order[start : start + batch]
            loss_actor, terms = actor_loss(
                policy,
                obs[idx],
                actions[idx],
                old_log_probs[idx],
                advantages[idx],
                clip_eps=config.clip_eps,
                ent_coef=config.ent_coef,
                robustness_lambda=config.robustness_lambda,
            )
            predicted = critic.value(obs[idx])
            residual = predicted - constant(returns[idx])
            value_loss = mean(residual * residual)
            total = loss_actor + config.vf_coef * value_loss
            total_value = total.item()
            if not math.isfinite(total_value):
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch}, minibatch offset {start}",
                    diagnostics={
                        "epoch": epoch,
                        "offset": start,
                        "total_loss": repr(total_value),
                        "value_loss": repr(value_loss.item()),
                        "actor_terms": asdict(terms),
                        "parameter_fingerprint": optimizer.params.fingerprint(),
                    },
                )
            grads = gradient(total, optimizer.params, allow_unused=True)
            clipped, grad_norm = clip_grad_norm(grads, config.max_grad_norm)
            optimizer.step(clipped)

            step_values = {
                "policy_loss": terms.policy_loss,
                "value_loss": value_loss.item(),
                "entropy": terms.entropy,
                "robustness": terms.robustness,
                "robustness_weighted": config.robustness_lambda * terms.robustness,
                "total_loss": total_value,
                "approx_kl": terms.approx_kl,
                "clip_fraction": terms.clip_fraction,
                "grad_norm": grad_norm,
            }
            for key, value in step_values.items():
                sums[key] = sums.get(key, 0.0) + value
            count += 1
    return TrainStats(**{key: value / count for key, value in sums.items()}, n_minibatches=count)


ActionSelector = Callable[[FloatArray], NDArray[np.int64]]


def run_episodes(
    select: ActionSelector,
    sim: SimConfig,
    timesteps: int,
    seed: int,
    on_step: Callable[[int, int, FloatArray, NDArray[np.int64]], None] | None = None,
) -> list[float]:
    """Drive one simulator for ``timesteps`` steps and return completed episode returns.

    A trailing partial episode only counts when no episode completed.
    """
    env = MobileEnv(sim)
    obs = env.reset(seed=seed)
    returns: list[float] = []
    running = 0.0
    episode = 0
    for _ in range(timesteps):
        actions = select(obs)
        if on_step is not None:
            on_step(episode, env.t, obs, actions)
        result = env.step(actions)
        running += float(result.rewards.mean())
        obs = result.observations
        if result.done:
            returns.append(running)
            running = 0.0
            episode += 1
            obs = env.reset()
    if not returns and env.t > 0:
        returns.append(running)
    return returns


def evaluate(
    policy: ActorPolicy,
    sim: SimConfig,
    timesteps: int,
    seed: int,
    record: bool = False,
) -> tuple[EvalStats, list[DecisionRecord]]:
    """Greedy evaluation; SENN policies can also emit one DecisionRecord per UE and step."""
    records: list[DecisionRecord] = []

    def select(obs: FloatArray) -> NDArray[np.int64]:
        return policy.act(obs, None)[0]

    def keep(episode: int, step: int, obs: FloatArray, actions: NDArray[np.int64]) -> None:
        if isinstance(policy, SennPolicy):
            records.extend(decision_records(policy, obs, actions, episode=episode, step=step))

    returns = run_episodes(select, sim, timesteps, seed, keep if record else None)
    return EvalStats(returns, timesteps, seed, policy.kind), records


def evaluate_heuristic(
    sim: SimConfig, timesteps: int, seed: int, threshold: float = DISCONNECT_THRESHOLD
) -> EvalStats:
    returns = run_episodes(lambda obs: heuristic_actions(obs, sim.n_bs, threshold), sim, timesteps, seed)
    return EvalStats(returns, timesteps, seed, "heuristic")


@dataclass(slots=True)
class TrainResult:
    policy: ActorPolicy
    critic: Critic
    timesteps: int
    updates: int
    history: list[dict[str, Any]] = field(default_factory=list)


def training_env_seed(config: RunConfig) -> int:
    return config.ppo.seed * 1000 + config.sim.seed


def evaluation_seed(config: RunConfig) -> int:
    return config.ppo.seed * 1000 + config.sim.seed + 500


def build_models(config: RunConfig, rng: np.random.Generator) -> tuple[ActorPolicy, Critic]:
    sim, ppo = config.sim, config.ppo
    policy = build_actor(ppo.actor, sim.obs_dim, sim.n_actions, ppo.hidden_sizes, rng)
    critic = Critic(sim.obs_dim, ppo.hidden_sizes, rng)
    return policy, critic


def train(
    config: RunConfig,
    on_metrics: Callable[[dict[str, Any]], None] | None = None,
) -> TrainResult:
    """Train until ``total_timesteps`` environment steps (summed over envs) are consumed."""
    ppo = config.ppo
    rng = np.random.default_rng(ppo.seed)
    policy, critic = build_models(config, rng)
    params = joint_parameters(policy, critic)
    optimizer = Adam(params, lr=ppo.learning_rate)
    envs = VectorEnv(config.sim, ppo.n_envs, seed=training_env_seed(config))
    envs.reset()

    timesteps = 0
    updates = 0
    next_eval = ppo.eval_interval
    history: list[dict[str, Any]] = []
    while timesteps < ppo.total_timesteps:
        buffer = collect_rollouts(policy, envs, ppo.horizon, rng)
        timesteps += ppo.n_envs * ppo.horizon
        attach_values(buffer, critic)
        compute_gae(buffer, ppo.gamma, ppo.gae_lambda)
        stats = ppo_update(policy, critic, buffer, ppo, optimizer, rng)
        updates += 1

        recent = envs.completed_returns[-ppo.n_envs * 4 :]
        metrics: dict[str, Any] = {
            "kind": "train",
            "step": timesteps,
            "update": updates,
            "episodic_return_mean": float(np.mean(recent)) if recent else None,
            "episodic_return_std": float(np.std(recent)) if recent else None,
            **stats.to_dict(),
        }
        if ppo.eval_interval > 0 and (timesteps >= next_eval or timesteps >= ppo.total_timesteps):
            eval_stats, _ = evaluate(policy, config.sim, ppo.eval_timesteps, evaluation_seed(config))
            metrics["eval_return_mean"] = eval_stats.mean
            metrics["eval_return_std"] = eval_stats.std
            while next_eval <= timesteps:
                next_eval += ppo.eval_interval
        history.append(metrics)
        if on_metrics is not None:
            on_metrics(metrics)
    return TrainResult(policy=policy, critic=critic, timesteps=timesteps, updates=updates, history=history)
