"""senn-rl - Self-explaining PPO agents for mobile network connection management."""

__version__ = "0.1.0"

from senn_rl.attribution import (
    attribution_compare,
    attribution_gradshap,
    attribution_ig,
    attribution_ixg,
    global_attribution,
)
from senn_rl.autodiff import ComputationRecord, ParameterSet, Tensor, gradient, jacobian, no_grad, trace
from senn_rl.baselines import heuristic_policy
from senn_rl.clustering import cluster_sets, importance, kmeans
from senn_rl.config import RunConfig, SimConfig, load_run_config
from senn_rl.env_sim import MobileEnv, VectorEnv, path_loss_db, qoe, snr_observed
from senn_rl.explain import bias_report, effect_distribution, local_explanation
from senn_rl.lipschitz import lipschitz_estimate
from senn_rl.models import AttributionReport, ClusterModel, DecisionRecord, EffectDistribution, LipschitzEstimate
from senn_rl.ppo import collect_rollouts, compute_gae, evaluate, ppo_update, train
from senn_rl.senn import DnnPolicy, MlpParametrizer, SennPolicy, actor_loss
from senn_rl.trace_store import (
    RunManifest,
    append_records,
    load_checkpoint,
    read_trace,
    save_checkpoint,
)

__all__ = [
    "Tensor",
    "ParameterSet",
    "ComputationRecord",
    "gradient",
    "jacobian",
    "trace",
    "no_grad",
    "SimConfig",
    "RunConfig",
    "load_run_config",
    "MobileEnv",
    "VectorEnv",
    "path_loss_db",
    "snr_observed",
    "qoe",
    "MlpParametrizer",
    "SennPolicy",
    "DnnPolicy",
    "actor_loss",
    "collect_rollouts",
    "compute_gae",
    "ppo_update",
    "evaluate",
    "train",
    "heuristic_policy",
    "local_explanation",
    "effect_distribution",
    "bias_report",
    "kmeans",
    "cluster_sets",
    "importance",
    "lipschitz_estimate",
    "attribution_ixg",
    "attribution_ig",
    "attribution_gradshap",
    "attribution_compare",
    "global_attribution",
    "DecisionRecord",
    "EffectDistribution",
    "ClusterModel",
    "LipschitzEstimate",
    "AttributionReport",
    "save_checkpoint",
    "load_checkpoint",
    "append_records",
    "read_trace",
    "RunManifest",
]
