"""Command orchestration: one ``run_*`` per CLI command.

Every command gets its own run directory named by a ULID, an append-only
``events.jsonl``, a sealed ``manifest.json`` and a ``summary.json`` /
``summary.md`` pair that is written even when the command fails.
"""

from __future__ import annotations

import hashlib
import json
import sys
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
from returns.result import Failure, Result, Success

from senn_rl.attribution import (
    attribution_compare,
    cluster_importance_attribution,
    effect_mean_attribution,
    global_attribution,
)
from senn_rl.clustering import attach_cluster_sets, k_sweep, kmeans
from senn_rl.config import RunConfig, load_run_config, parse_run_config
from senn_rl.env_sim import MobileEnv, action_names, feature_names, observation_bounds
from senn_rl.errors import ConfigError, NonFiniteLossError
from senn_rl.explain import bias_report, decision_records, effect_distributions
from senn_rl.lipschitz import lipschitz_estimate
from senn_rl.models import ClusterModel, DecisionRecord
from senn_rl.ppo import evaluate, evaluate_heuristic, evaluation_seed, train
from senn_rl.senn import ActorPolicy, SennPolicy
from senn_rl.trace_store import (
    LoadedCheckpoint,
    RunManifest,
    TraceHeader,
    append_records,
    append_stream,
    init_trace,
    load_checkpoint,
    load_manifest,
    load_trace,
    read_trace_header,
    save_checkpoint,
    write_manifest,
)
from senn_rl.utils import json_dumps, write_csv, write_text_atomic

STATUS_EXIT_CODES = {"passed": 0, "failed_config": 2, "failed_processing": 3, "partial": 4}

PRIMARY_OUTPUTS = {
    "train": ("checkpoint_fingerprint", "timesteps", "updates"),
    "eval": ("return_mean", "return_std", "heuristic_return_mean", "heuristic_return_std", "trace_digest"),
    "explain-local": ("records_digest",),
    "explain-global": ("record_count", "distortion", "cluster_sets"),
    "lipschitz": ("lipschitz_mean", "lipschitz_std", "lipschitz_max"),
    "attrib-compare": ("compared_actions",),
    "sweep-lambda": ("cells",),
}


@dataclass(slots=True)
class RunIssue:
    """Structured error or warning raised while running a command."""

    code: str
    stage: str
    message: str
    severity: str = "error"


@dataclass(slots=True)
class CommandSummary:
    """Outcome of one command, persisted for CI diagnostics."""

    command: str
    status: str
    run_id: str
    run_dir: str
    outputs: dict[str, Any] = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)
    issues: list[RunIssue] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return STATUS_EXIT_CODES[self.status]


class CommandAbort(Exception):
    """Stop the current command with a structured issue."""

    def __init__(self, issue: RunIssue) -> None:
        super().__init__(issue.message)
        self.issue = issue


class RunContext:
    """Run directory, manifest and event stream of the command in progress."""

    def __init__(self, manifest: RunManifest, run_dir: Path) -> None:
        self.manifest = manifest
        self.run_dir = run_dir
        self.issues: list[RunIssue] = []
        self.events_path = run_dir / "events.jsonl"
        self.metrics_path = run_dir / "metrics.jsonl"

    def event(self, kind: str, **payload: Any) -> None:
        result = append_stream(self.events_path, kind, {"run_id": self.manifest.run_id, **payload})
        if isinstance(result, Failure):
            print(f"Warning: failed to log {kind} event: {result.failure()}", file=sys.stderr)

    def metric(self, record: dict[str, Any]) -> None:
        result = append_stream(self.metrics_path, record.get("kind", "metric"), record)
        if isinstance(result, Failure):
            print(f"Warning: failed to log metrics: {result.failure()}", file=sys.stderr)

    def artifact(self, name: str, path: Path) -> Path:
        self.manifest.add_artifact(name, path)
        self.event("artifact_written", name=name, path=str(path))
        return path

    def output(self, name: str, value: Any) -> None:
        self.manifest.record_output(name, value)

    def issue(self, code: str, stage: str, message: str, severity: str = "error") -> None:
        entry = RunIssue(code=code, stage=stage, message=message, severity=severity)
        self.issues.append(entry)
        self.event("issue", **asdict(entry))
        if severity != "error":
            print(f"Warning: {code}: {message}", file=sys.stderr)

    def write_json(self, name: str, payload: Any) -> Path:
        path = self.run_dir / name
        write_text_atomic(path, json_dumps(payload, pretty=True) + "\n")
        return self.artifact(name, path)

    def write_table(self, name: str, header: list[str], rows: list[list[Any]]) -> Path:
        return self.artifact(name, write_csv(self.run_dir / name, header, rows))


CommandBody = Callable[[RunContext, RunConfig], None]


def _apply_seed(config: RunConfig, seed: int | None) -> RunConfig:
    if seed is None:
        return config
    return replace(
        config,
        ppo=replace(config.ppo, seed=seed),
        explain=replace(config.explain, seed=seed),
        lipschitz=replace(config.lipschitz, seed=seed),
    )


def _seeds(config: RunConfig) -> dict[str, int]:
    return {
        "sim": config.sim.seed,
        "ppo": config.ppo.seed,
        "explain": config.explain.seed,
        "lipschitz": config.lipschitz.seed,
        "evaluation": evaluation_seed(config),
    }


def _load_config(source: Path | str | Mapping[str, Any] | None) -> Result[RunConfig, Exception]:
    if isinstance(source, Mapping):
        return parse_run_config(source)
    return load_run_config(source)


def _config_issues(error: Exception) -> list[RunIssue]:
    if isinstance(error, ConfigError) and error.issues:
        return [
            RunIssue(
                code="CONFIG_INVALID",
                stage="config",
                message=f"{issue.get('field')}: {issue.get('message')} (value={issue.get('value')!r})",
            )
            for issue in error.issues
        ]
    return [RunIssue(code="CONFIG_INVALID", stage="config", message=str(error))]


def _command_status(issues: Sequence[RunIssue], completed: bool) -> str:
    errors = [issue for issue in issues if issue.severity == "error"]
    if not errors:
        return "passed"
    if any(issue.stage == "config" for issue in errors):
        return "failed_config"
    return "partial" if completed else "failed_processing"


def _execute(
    command: str,
    arguments: dict[str, Any],
    config_source: Path | str | Mapping[str, Any] | None,
    out_root: Path,
    body: CommandBody,
    seed: int | None = None,
    overrides: Callable[[RunConfig], RunConfig] | None = None,
) -> CommandSummary:
    """Load config, open a run directory, run ``body`` and persist every output."""
    config_result = _load_config(config_source)
    config: RunConfig | None = None
    pending: list[RunIssue] = []
    if isinstance(config_result, Failure):
        pending = _config_issues(config_result.failure())
    else:
        config = _apply_seed(config_result.unwrap(), seed)
        if overrides is not None:
            try:
                config = overrides(config)
                invalid = config.validate()
                if invalid:
                    raise ConfigError(
                        "command overrides violate invariants", [item.to_dict() for item in invalid]
                    )
            except ConfigError as exc:
                pending = _config_issues(exc)

    manifest = RunManifest(
        command=command,
        arguments=arguments,
        config=config.to_dict() if config is not None else {},
        seeds=_seeds(config) if config is not None else {},
    )
    run_dir = out_root / manifest.run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    context = RunContext(manifest, run_dir)
    context.event("command_started", command=command, arguments=arguments)
    for issue in pending:
        context.issue(issue.code, issue.stage, issue.message, issue.severity)

    completed = False
    if config is not None and not pending:
        try:
            body(context, config)
            completed = True
        except CommandAbort as exc:
            context.issue(exc.issue.code, exc.issue.stage, exc.issue.message, exc.issue.severity)
        except ConfigError as exc:
            for issue in _config_issues(exc):
                context.issue(issue.code, issue.stage, issue.message)
        except NonFiniteLossError as exc:
            context.issue("NON_FINITE_LOSS", "train", f"{exc} diagnostics={json_dumps(exc.diagnostics)}")
        except Exception as exc:
            context.issue("UNHANDLED_COMMAND_EXCEPTION", command, f"{type(exc).__name__}: {exc}")

    status = _command_status(context.issues, completed)
    return _finish(context, status)


def _finish(context: RunContext, status: str) -> CommandSummary:
    """Seal and write the manifest, then persist and print the summary."""
    manifest = context.manifest
    sealed = manifest.seal(status)
    if isinstance(sealed, Failure):
        context.issue("MANIFEST_SEAL_FAILED", "manifest", str(sealed.failure()))
        status = "failed_processing"
        manifest.status = status
    written = write_manifest(manifest, context.run_dir / "manifest.json")
    if isinstance(written, Failure):
        print(f"Warning: failed to write manifest: {written.failure()}", file=sys.stderr)
    context.event("command_finished", status=status)

    summary = CommandSummary(
        command=manifest.command,
        status=status,
        run_id=manifest.run_id,
        run_dir=str(context.run_dir),
        outputs=dict(manifest.outputs),
        artifacts=sorted(manifest.artifacts),
        issues=list(context.issues),
    )
    _persist_summary(context.run_dir, summary)
    _print_summary(summary)
    return summary


def _persist_summary(run_dir: Path, summary: CommandSummary) -> None:
    """Persist the summary even on partial failures."""
    try:
        write_text_atomic(run_dir / "summary.json", json_dumps(asdict(summary), pretty=True) + "\n")
        write_text_atomic(run_dir / "summary.md", _render_summary_markdown(summary))
    except OSError as exc:
        print(f"Warning: failed to persist summary: {exc}", file=sys.stderr)


def _render_summary_markdown(summary: CommandSummary) -> str:
    lines = [
        f"## senn-rl {summary.command} - {summary.status}",
        "",
        f"- Run id: {summary.run_id}",
        f"- Run directory: {summary.run_dir}",
        f"- Artifacts: {len(summary.artifacts)}",
    ]
    for name, value in sorted(summary.outputs.items()):
        if isinstance(value, (int, float, str)) or value is None:
            lines.append(f"- {name}: {value}")
    if summary.issues:
        lines.extend(["", "### Issues", ""])
        for issue in summary.issues:
            lines.append(f"- `{issue.code}` [{issue.stage}, {issue.severity}] {issue.message}")
    lines.append("")
    return "\n".join(lines)


def _print_summary(summary: CommandSummary) -> None:
    print(f"senn-rl {summary.command}")
    print(f"  status: {summary.status}")
    print(f"  run_id: {summary.run_id}")
    print(f"  run_dir: {summary.run_dir}")
    for name, value in sorted(summary.outputs.items()):
        if isinstance(value, (int, float, str)) or value is None:
            print(f"  {name}: {value}")
    print(f"  issues: {len(summary.issues)}")
    for issue in summary.issues:
        print(f"    - {issue.code} [{issue.stage}] {issue.message}")


def _records_digest(records: Iterable[DecisionRecord]) -> str:
    """Content hash of records independent of file headers and timestamps."""
    digest = hashlib.sha256()
    for record in records:
        digest.update(json.dumps(record.to_dict(), sort_keys=True).encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()


def _require_checkpoint(path: Path | str, config: RunConfig) -> LoadedCheckpoint:
    result = load_checkpoint(path)
    if isinstance(result, Failure):
        error = result.failure()
        raise CommandAbort(RunIssue("CHECKPOINT_LOAD_FAILED", "checkpoint", f"{type(error).__name__}: {error}"))
    loaded = result.unwrap()
    expected = config.sim.fingerprint()
    if loaded.sim_fingerprint and loaded.sim_fingerprint != expected:
        raise CommandAbort(
            RunIssue(
                "SIM_FINGERPRINT_MISMATCH",
                "config",
                f"checkpoint was trained on scenario {loaded.sim_fingerprint[:12]}, config describes {expected[:12]}",
            )
        )
    if loaded.policy.n != config.sim.obs_dim or loaded.policy.m != config.sim.n_actions:
        raise CommandAbort(
            RunIssue(
                "SIM_SHAPE_MISMATCH",
                "config",
                f"checkpoint expects n={loaded.policy.n}, m={loaded.policy.m}; config gives "
                f"n={config.sim.obs_dim}, m={config.sim.n_actions}",
            )
        )
    return loaded


def _require_senn(policy: ActorPolicy) -> SennPolicy:
    if not isinstance(policy, SennPolicy):
        raise CommandAbort(
            RunIssue("NOT_SELF_EXPLAINING", "checkpoint", f"{policy.kind} actors carry no intrinsic explanation")
        )
    return policy


def _require_trace(path: Path | str, fingerprint: str | None = None) -> tuple[TraceHeader, list[DecisionRecord]]:
    header_result = read_trace_header(path)
    if isinstance(header_result, Failure):
        raise CommandAbort(RunIssue("TRACE_LOAD_FAILED", "trace", str(header_result.failure())))
    header = header_result.unwrap()
    records_result = load_trace(path)
    if isinstance(records_result, Failure):
        raise CommandAbort(RunIssue("TRACE_LOAD_FAILED", "trace", str(records_result.failure())))
    records = records_result.unwrap()
    if header is None or not records:
        raise CommandAbort(RunIssue("EMPTY_TRACE", "trace", f"{path} holds no decision records"))
    if fingerprint is not None and header.fingerprint != fingerprint:
        raise CommandAbort(
            RunIssue(
                "TRACE_CHECKPOINT_MISMATCH",
                "config",
                f"trace was produced by policy {header.fingerprint[:12]}, checkpoint is {fingerprint[:12]}",
            )
        )
    return header, records


def run_train(
    config: Path | str | Mapping[str, Any] | None,
    out_root: Path,
    seed: int | None = None,
    actor: str | None = None,
    robustness_lambda: float | None = None,
    total_timesteps: int | None = None,
) -> CommandSummary:
    """Train one actor arm and write its checkpoint plus the metric stream."""

    def overrides(current: RunConfig) -> RunConfig:
        ppo = current.ppo
        if actor is not None:
            ppo = replace(ppo, actor=actor)
        if robustness_lambda is not None:
            ppo = replace(ppo, robustness_lambda=robustness_lambda)
        if total_timesteps is not None:
            ppo = replace(ppo, total_timesteps=total_timesteps)
        return replace(current, ppo=ppo)

    def body(context: RunContext, cfg: RunConfig) -> None:
        context.event("training_started", actor=cfg.ppo.actor, robustness_lambda=cfg.ppo.robustness_lambda)
        result = train(cfg, on_metrics=context.metric)
        context.artifact("metrics.jsonl", context.metrics_path)
        checkpoint_path = context.run_dir / "checkpoint.json"
        saved = save_checkpoint(result.policy, result.critic, checkpoint_path, cfg.sim.fingerprint())
        if isinstance(saved, Failure):
            raise CommandAbort(RunIssue("CHECKPOINT_WRITE_FAILED", "checkpoint", str(saved.failure())))
        context.artifact("checkpoint.json", checkpoint_path)
        context.output("checkpoint_fingerprint", saved.unwrap())
        context.output("timesteps", result.timesteps)
        context.output("updates", result.updates)
        evaluated = [entry for entry in result.history if "eval_return_mean" in entry]
        if evaluated:
            context.output("final_eval_return_mean", evaluated[-1]["eval_return_mean"])
            context.output("final_eval_return_std", evaluated[-1]["eval_return_std"])

    arguments = {
        "config": None if config is None or isinstance(config, Mapping) else str(config),
        "seed": seed,
        "actor": actor,
        "robustness_lambda": robustness_lambda,
        "total_timesteps": total_timesteps,
    }
    return _execute("train", arguments, config, out_root, body, seed=seed, overrides=overrides)


def run_eval(
    checkpoint: Path | str,
    config: Path | str | Mapping[str, Any] | None,
    out_root: Path,
    seed: int | None = None,
    timesteps: int | None = None,
) -> CommandSummary:
    """Greedy evaluation next to the heuristic baseline on the same seed, plus the decision trace."""

    def body(context: RunContext, cfg: RunConfig) -> None:
        loaded = _require_checkpoint(checkpoint, cfg)
        steps = timesteps if timesteps is not None else cfg.explain.eval_timesteps
        eval_seed = evaluation_seed(cfg)
        stats, records = evaluate(loaded.policy, cfg.sim, steps, eval_seed, record=True)
        baseline = evaluate_heuristic(cfg.sim, steps, eval_seed, cfg.explain.heuristic_threshold)
        context.write_json("eval.json", {"policy": stats.to_dict(), "heuristic": baseline.to_dict()})
        context.output("return_mean", stats.mean)
        context.output("return_std", stats.std)
        context.output("heuristic_return_mean", baseline.mean)
        context.output("heuristic_return_std", baseline.std)
        context.output("episodes", len(stats.episode_returns))

        if not isinstance(loaded.policy, SennPolicy):
            context.issue(
                "TRACE_SKIPPED", "trace", f"{loaded.policy.kind} actors produce no decision records", "warning"
            )
            return
        trace_path = context.run_dir / "trace.jsonl"
        header = TraceHeader(
            n=loaded.policy.n,
            m=loaded.policy.m,
            fingerprint=loaded.fingerprint,
            sim_fingerprint=cfg.sim.fingerprint(),
        )
        initialized = init_trace(trace_path, header)
        if isinstance(initialized, Failure):
            raise CommandAbort(RunIssue("TRACE_WRITE_FAILED", "trace", str(initialized.failure())))
        appended = append_records(trace_path, records, fingerprint=loaded.fingerprint)
        if isinstance(appended, Failure):
            raise CommandAbort(RunIssue("TRACE_WRITE_FAILED", "trace", str(appended.failure())))
        context.artifact("trace.jsonl", trace_path)
        context.output("trace_records", appended.unwrap())
        context.output("trace_digest", _records_digest(records))

    arguments = {"checkpoint": str(checkpoint), "seed": seed, "timesteps": timesteps}
    return _execute("eval", _with_config(arguments, config), config, out_root, body, seed=seed)


def run_explain_local(
    checkpoint: Path | str,
    config: Path | str | Mapping[str, Any] | None,
    out_root: Path,
    step: int = 0,
    seed: int | None = None,
) -> CommandSummary:
    """Explain every UE's decision at one simulator step of a greedy rollout."""

    def body(context: RunContext, cfg: RunConfig) -> None:
        if step < 0:
            raise CommandAbort(RunIssue("INVALID_STEP", "config", f"step must be >= 0, got {step}"))
        policy = _require_senn(_require_checkpoint(checkpoint, cfg).policy)
        env = MobileEnv(cfg.sim)
        obs = env.reset(seed=evaluation_seed(cfg))
        episode = 0
        for _ in range(step):
            actions, _ = policy.act(obs, None)
            result = env.step(actions)
            obs = result.observations
            if result.done:
                obs = env.reset()
                episode += 1
        records = decision_records(policy, obs, episode=episode, step=env.t)

        names = feature_names(cfg.sim.n_bs)
        labels = action_names(cfg.sim.n_bs)
        context.write_json(
            "local_explanation.json",
            {
                "episode": episode,
                "step": env.t,
                "feature_names": names,
                "action_names": labels,
                "records": [record.to_dict() for record in records],
            },
        )
        rows = [
            [
                record.ue,
                labels[record.action],
                labels[action],
                name,
                record.observation[j],
                record.relevance[action, j],
                record.effects[action, j],
            ]
            for record in records
            for action in range(record.shape[0])
            for j, name in enumerate(names)
        ]
        context.write_table(
            "local_explanation.csv",
            ["ue", "chosen_action", "action", "feature", "value", "relevance", "effect"],
            rows,
        )
        context.output("records_digest", _records_digest(records))
        context.output("chosen_actions", [labels[record.action] for record in records])

    arguments = {"checkpoint": str(checkpoint), "step": step, "seed": seed}
    return _execute("explain-local", _with_config(arguments, config), config, out_root, body, seed=seed)


def _cluster_vectors(records: Sequence[DecisionRecord], target: str) -> np.ndarray:
    if target == "full_matrix":
        return np.stack([record.relevance.ravel() for record in records])
    return np.stack([record.chosen_relevance() for record in records])


def _fit_cluster_model(records: Sequence[DecisionRecord], cfg: RunConfig, k: int, m: int) -> ClusterModel:
    vectors = _cluster_vectors(records, cfg.explain.cluster_target)
    labels = np.array([record.action for record in records], dtype=np.int64)
    model = kmeans(
        vectors, k, cfg.explain.seed, labels=labels, n_labels=m, silhouette_sample=cfg.explain.silhouette_sample
    )
    return attach_cluster_sets(model, cfg.explain.tau)


def run_explain_global(
    trace: Path | str,
    config: Path | str | Mapping[str, Any] | None,
    out_root: Path,
    checkpoint: Path | str | None = None,
    k: int | None = None,
    tau: float | None = None,
    seed: int | None = None,
) -> CommandSummary:
    """Effect distributions, k sweep, cluster sets, importance vectors and the bias report."""

    def overrides(current: RunConfig) -> RunConfig:
        explain = current.explain
        if k is not None:
            explain = replace(explain, k=k)
        if tau is not None:
            explain = replace(explain, tau=tau)
        return replace(current, explain=explain)

    def body(context: RunContext, cfg: RunConfig) -> None:
        policy: SennPolicy | None = None
        fingerprint = None
        if checkpoint is not None:
            loaded = _require_checkpoint(checkpoint, cfg)
            policy = _require_senn(loaded.policy)
            fingerprint = loaded.fingerprint
        header, records = _require_trace(trace, fingerprint)
        m, n = header.m, header.n
        n_bs = m - 1
        if n != 4 * n_bs + 1:
            raise CommandAbort(RunIssue("TRACE_SHAPE_UNSUPPORTED", "trace", f"n={n} does not fit m={m} actions"))
        names = feature_names(n_bs)
        labels = action_names(n_bs)
        context.output("record_count", len(records))

        distributions = effect_distributions(records, m, n_bs)
        summaries = []
        for distribution in distributions:
            label = labels[distribution.action]
            if distribution.empty:
                context.issue("ACTION_NEVER_TAKEN", "effects", f"no record chose {label}", "warning")
            context.write_table(f"effects_{label}.csv", names, distribution.samples.tolist())
            payload = distribution.to_dict()
            payload.pop("samples")
            payload["label"] = label
            summaries.append(payload)
        context.write_json("effect_distributions.json", summaries)

        vectors = _cluster_vectors(records, cfg.explain.cluster_target)
        action_labels = np.array([record.action for record in records], dtype=np.int64)
        sweep = k_sweep(
            vectors,
            action_labels,
            range(cfg.explain.k_min, cfg.explain.k_max + 1),
            cfg.explain.seed,
            n_labels=m,
            silhouette_sample=cfg.explain.silhouette_sample,
        )
        context.write_table(
            "k_sweep.csv",
            ["k", "distortion", "silhouette", "davies_bouldin", "mean_purity"],
            [[model.k, model.distortion, model.silhouette, model.davies_bouldin, model.mean_purity] for model in sweep],
        )

        model = _fit_cluster_model(records, cfg, cfg.explain.k, m)
        context.write_json("clusters.json", {"tau": cfg.explain.tau, **model.to_dict()})
        contingency = model.contingency if model.contingency is not None else np.zeros((model.k, m), dtype=np.int64)
        purity = model.purity if model.purity is not None else np.zeros(model.k)
        context.write_table(
            "contingency.csv",
            ["cluster", "size", "purity", *labels],
            [
                [cluster, int(model.sizes[cluster]), float(purity[cluster]), *contingency[cluster].tolist()]
                for cluster in range(model.k)
            ],
        )
        if cfg.explain.cluster_target == "chosen_row":
            importance_names = names
        else:
            importance_names = [f"{label}:{name}" for label in labels for name in names]
        importance_rows = []
        for action, vector in sorted(model.importance.items()):
            if vector is None:
                context.issue("EMPTY_CLUSTER_SET", "clusters", f"C({labels[action]}) is empty", "warning")
                continue
            importance_rows.append([labels[action], len(model.cluster_sets[action]), *vector.tolist()])
        context.write_table("importance.csv", ["action", "clusters", *importance_names], importance_rows)

        bias = bias_report(policy) if policy is not None else {
            label: float(value) for label, value in zip(labels, records[0].bias)
        }
        context.write_json("bias.json", bias)
        context.output("distortion", model.distortion)
        context.output("silhouette", model.silhouette)
        context.output("cluster_sets", {labels[a]: members for a, members in model.cluster_sets.items()})

    arguments = {
        "trace": str(trace),
        "checkpoint": None if checkpoint is None else str(checkpoint),
        "k": k,
        "tau": tau,
        "seed": seed,
    }
    return _execute(
        "explain-global", _with_config(arguments, config), config, out_root, body, seed=seed, overrides=overrides
    )


def _sample_anchors(records: Sequence[DecisionRecord], count: int, seed: int) -> np.ndarray:
    observations = np.stack([record.observation for record in records])
    if observations.shape[0] <= count:
        return observations
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(observations.shape[0], size=count, replace=False))
    return observations[keep]


def run_lipschitz(
    checkpoint: Path | str,
    trace: Path | str,
    config: Path | str | Mapping[str, Any] | None,
    out_root: Path,
    anchors: int | None = None,
    seed: int | None = None,
) -> CommandSummary:
    """Local Lipschitz estimate at anchors drawn from an evaluation trace."""

    def overrides(current: RunConfig) -> RunConfig:
        if anchors is None:
            return current
        return replace(current, lipschitz=replace(current.lipschitz, anchors=anchors))

    def body(context: RunContext, cfg: RunConfig) -> None:
        loaded = _require_checkpoint(checkpoint, cfg)
        _, records = _require_trace(trace, loaded.fingerprint)
        points = _sample_anchors(records, cfg.lipschitz.anchors, cfg.lipschitz.seed)
        estimate = lipschitz_estimate(
            loaded.policy,
            points,
            eps_ball=cfg.lipschitz.eps_ball,
            iterations=cfg.lipschitz.iterations,
            step_size=cfg.lipschitz.step_size,
            seed=cfg.lipschitz.seed,
            bounds=observation_bounds(cfg.sim),
        )
        context.write_json("lipschitz.json", estimate.to_dict())
        context.write_table(
            "lipschitz_anchors.csv",
            ["anchor", "lipschitz"],
            [[index, value] for index, value in enumerate(estimate.per_anchor.tolist())],
        )
        context.output("lipschitz_mean", estimate.mean)
        context.output("lipschitz_std", estimate.std)
        context.output("lipschitz_max", estimate.global_max)
        context.output("anchor_count", estimate.anchor_count)

    arguments = {"checkpoint": str(checkpoint), "trace": str(trace), "anchors": anchors, "seed": seed}
    return _execute(
        "lipschitz", _with_config(arguments, config), config, out_root, body, seed=seed, overrides=overrides
    )


def run_attrib_compare(
    checkpoint: Path | str,
    trace: Path | str,
    config: Path | str | Mapping[str, Any] | None,
    out_root: Path,
    max_records: int = 512,
    seed: int | None = None,
) -> CommandSummary:
    """Compare post-hoc and intrinsic attributions per action."""

    def body(context: RunContext, cfg: RunConfig) -> None:
        loaded = _require_checkpoint(checkpoint, cfg)
        policy = _require_senn(loaded.policy)
        header, records = _require_trace(trace, loaded.fingerprint)
        n_bs = header.m - 1
        names = feature_names(n_bs)
        labels = action_names(n_bs)
        distributions = effect_distributions(records, header.m, n_bs)
        model = _fit_cluster_model(records, cfg, min(cfg.explain.k, len(records)), header.m)

        compared: list[str] = []
        tables: dict[str, Any] = {}
        for action in range(header.m):
            candidates = [
                global_attribution(
                    method,
                    policy,
                    records,
                    action,
                    max_records=max_records,
                    seed=cfg.explain.seed,
                    ig_steps=cfg.explain.ig_steps,
                    gradshap_samples=cfg.explain.gradshap_samples,
                    gradshap_noise=cfg.explain.gradshap_noise,
                )
                for method in ("ixg", "ig", "gradshap")
            ]
            candidates.append(effect_mean_attribution(distributions[action]))
            candidates.append(cluster_importance_attribution(model, action, policy.n))
            reports = [report.unwrap() for report in candidates if report.value_or(None) is not None]
            if len(reports) < 2:
                context.issue(
                    "ATTRIBUTION_SKIPPED", "attribution", f"fewer than two methods apply to {labels[action]}", "warning"
                )
                continue
            comparison = attribution_compare(reports, names)
            tables[labels[action]] = comparison.to_dict()
            context.write_table(
                f"attribution_{labels[action]}.csv",
                ["feature", *comparison.methods],
                [[name, *row] for name, row in zip(comparison.feature_names, comparison.table)],
            )
            compared.append(labels[action])
        context.write_json("attribution_compare.json", tables)
        context.output("compared_actions", compared)

    arguments = {"checkpoint": str(checkpoint), "trace": str(trace), "max_records": max_records, "seed": seed}
    return _execute("attrib-compare", _with_config(arguments, config), config, out_root, body, seed=seed)


def run_sweep_lambda(
    config: Path | str | Mapping[str, Any] | None,
    out_root: Path,
    lambdas: Sequence[float],
    seeds: Sequence[int] | None = None,
    total_timesteps: int | None = None,
    eval_timesteps: int | None = None,
) -> CommandSummary:
    """Train, evaluate and estimate stability for every (lambda, seed) cell.

    A failed cell is recorded as an issue and the sweep moves on.
    """

    def overrides(current: RunConfig) -> RunConfig:
        if len(set(lambdas)) < 2:
            raise ConfigError(
                "sweep-lambda needs at least two distinct lambda values",
                [{"field": "lambdas", "message": "at least two distinct values required", "value": list(lambdas)}],
            )
        if current.ppo.actor == "dnn":
            raise ConfigError(
                "sweep-lambda needs a self-explaining actor",
                [{"field": "ppo.actor", "message": "must be senn or senn-nobias", "value": current.ppo.actor}],
            )
        if total_timesteps is None:
            return current
        return replace(current, ppo=replace(current.ppo, total_timesteps=total_timesteps))

    def body(context: RunContext, cfg: RunConfig) -> None:
        cell_seeds = list(seeds) if seeds else [cfg.ppo.seed]
        steps = eval_timesteps if eval_timesteps is not None else cfg.explain.eval_timesteps
        rows: list[list[Any]] = []
        cells: list[dict[str, Any]] = []
        for value in lambdas:
            for cell_seed in cell_seeds:
                cell = replace(cfg, ppo=replace(cfg.ppo, robustness_lambda=value, seed=cell_seed))
                tag = f"lambda={value} seed={cell_seed}"
                context.event("cell_started", robustness_lambda=value, seed=cell_seed)
                try:
                    outcome = _sweep_cell(context, cell, steps)
                except NonFiniteLossError as exc:
                    context.issue("NON_FINITE_LOSS", tag, f"{exc} diagnostics={json_dumps(exc.diagnostics)}")
                    rows.append([value, cell_seed, None, None, None, None, None, "failed"])
                    continue
                except Exception as exc:
                    context.issue("CELL_FAILED", tag, f"{type(exc).__name__}: {exc}")
                    rows.append([value, cell_seed, None, None, None, None, None, "failed"])
                    continue
                cells.append({"robustness_lambda": value, "seed": cell_seed, **outcome})
                rows.append(
                    [
                        value,
                        cell_seed,
                        outcome["return_mean"],
                        outcome["return_std"],
                        outcome["lipschitz_mean"],
                        outcome["lipschitz_std"],
                        outcome["lipschitz_max"],
                        "passed",
                    ]
                )
        context.write_table(
            "sweep_cells.csv",
            [
                "robustness_lambda",
                "seed",
                "return_mean",
                "return_std",
                "lipschitz_mean",
                "lipschitz_std",
                "lipschitz_max",
                "status",
            ],
            rows,
        )
        context.write_table(
            "sweep_lambda.csv",
            ["robustness_lambda", "cells", "return_mean", "return_std", "lipschitz_mean", "lipschitz_std"],
            _aggregate_cells(lambdas, cells),
        )
        if context.metrics_path.is_file():
            context.artifact("metrics.jsonl", context.metrics_path)
        context.output("cells", cells)

    arguments = {
        "lambdas": list(lambdas),
        "seeds": None if seeds is None else list(seeds),
        "total_timesteps": total_timesteps,
        "eval_timesteps": eval_timesteps,
    }
    return _execute("sweep-lambda", _with_config(arguments, config), config, out_root, body, overrides=overrides)


def _sweep_cell(context: RunContext, cell: RunConfig, eval_steps: int) -> dict[str, Any]:
    value, cell_seed = cell.ppo.robustness_lambda, cell.ppo.seed

    def on_metrics(record: dict[str, Any]) -> None:
        context.metric({**record, "robustness_lambda": value, "seed": cell_seed})

    result = train(cell, on_metrics=on_metrics)
    checkpoint_path = context.run_dir / "checkpoints" / f"lambda_{value}_seed_{cell_seed}.json"
    saved = save_checkpoint(result.policy, result.critic, checkpoint_path, cell.sim.fingerprint())
    if isinstance(saved, Failure):
        raise saved.failure()
    context.artifact(f"checkpoints/{checkpoint_path.name}", checkpoint_path)
    stats, records = evaluate(result.policy, cell.sim, eval_steps, evaluation_seed(cell), record=True)
    if not records:
        raise RuntimeError("evaluation produced no decision records")
    estimate = lipschitz_estimate(
        result.policy,
        _sample_anchors(records, cell.lipschitz.anchors, cell.lipschitz.seed),
        eps_ball=cell.lipschitz.eps_ball,
        iterations=cell.lipschitz.iterations,
        step_size=cell.lipschitz.step_size,
        seed=cell.lipschitz.seed,
        bounds=observation_bounds(cell.sim),
    )
    return {
        "checkpoint_fingerprint": saved.unwrap(),
        "return_mean": stats.mean,
        "return_std": stats.std,
        "lipschitz_mean": estimate.mean,
        "lipschitz_std": estimate.std,
        "lipschitz_max": estimate.global_max,
    }


def _aggregate_cells(lambdas: Sequence[float], cells: Sequence[dict[str, Any]]) -> list[list[Any]]:
    """Per-lambda means over seeds; the std columns are taken over per-cell means."""
    rows: list[list[Any]] = []
    for value in dict.fromkeys(lambdas):
        matching = [cell for cell in cells if cell["robustness_lambda"] == value]
        if not matching:
            rows.append([value, 0, None, None, None, None])
            continue
        returns = np.array([cell["return_mean"] for cell in matching])
        constants = np.array([cell["lipschitz_mean"] for cell in matching])
        if len(matching) == 1:
            return_std, lipschitz_std = matching[0]["return_std"], matching[0]["lipschitz_std"]
        else:
            return_std, lipschitz_std = float(returns.std()), float(constants.std())
        rows.append([value, len(matching), float(returns.mean()), return_std, float(constants.mean()), lipschitz_std])
    return rows


def _with_config(arguments: dict[str, Any], config: Path | str | Mapping[str, Any] | None) -> dict[str, Any]:
    return {"config": None if config is None or isinstance(config, Mapping) else str(config), **arguments}


@dataclass(slots=True)
class RerunCheck:
    original_run_id: str
    rerun: CommandSummary
    mismatches: dict[str, dict[str, Any]] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        if self.rerun.status != "passed":
            return self.rerun.exit_code
        return STATUS_EXIT_CODES["failed_processing"] if self.mismatches else 0


def run_rerun(manifest_path: Path | str, out_root: Path) -> Result[RerunCheck, Exception]:
    """Re-execute a sealed manifest and compare its primary outputs."""
    loaded = load_manifest(manifest_path)
    if isinstance(loaded, Failure):
        return loaded
    manifest = loaded.unwrap()
    if not manifest.sealed:
        return Failure(ValueError(f"manifest {manifest.run_id} is not sealed"))
    runner = _RERUNNERS.get(manifest.command)
    if runner is None:
        return Failure(ValueError(f"manifest command {manifest.command!r} cannot be rerun"))

    summary = runner(manifest.arguments, manifest.config, out_root)
    check = RerunCheck(original_run_id=manifest.run_id, rerun=summary)
    for key in PRIMARY_OUTPUTS.get(manifest.command, ()):
        before = manifest.outputs.get(key)
        after = summary.outputs.get(key)
        if json_dumps(before) != json_dumps(after):
            check.mismatches[key] = {"original": before, "rerun": after}
    report = {
        "original_run_id": manifest.run_id,
        "rerun_id": summary.run_id,
        "reproduced": not check.mismatches,
        "mismatches": check.mismatches,
    }
    try:
        write_text_atomic(Path(summary.run_dir) / "rerun_check.json", json_dumps(report, pretty=True) + "\n")
    except OSError as exc:
        print(f"Warning: failed to write rerun report: {exc}", file=sys.stderr)
    return Success(check)


Rerunner = Callable[[dict[str, Any], dict[str, Any], Path], CommandSummary]

_RERUNNERS: dict[str, Rerunner] = {
    "train": lambda args, cfg, out: run_train(
        cfg, out, seed=args.get("seed"), actor=args.get("actor"),
        robustness_lambda=args.get("robustness_lambda"), total_timesteps=args.get("total_timesteps"),
    ),
    "eval": lambda args, cfg, out: run_eval(
        args["checkpoint"], cfg, out, seed=args.get("seed"), timesteps=args.get("timesteps")
    ),
    "explain-local": lambda args, cfg, out: run_explain_local(
        args["checkpoint"], cfg, out, step=args.get("step", 0), seed=args.get("seed")
    ),
    "explain-global": lambda args, cfg, out: run_explain_global(
        args["trace"], cfg, out, checkpoint=args.get("checkpoint"), k=args.get("k"), tau=args.get("tau"),
        seed=args.get("seed"),
    ),
    "lipschitz": lambda args, cfg, out: run_lipschitz(
        args["checkpoint"], args["trace"], cfg, out, anchors=args.get("anchors"), seed=args.get("seed")
    ),
    "attrib-compare": lambda args, cfg, out: run_attrib_compare(
        args["checkpoint"], args["trace"], cfg, out, max_records=args.get("max_records", 512), seed=args.get("seed")
    ),
    "sweep-lambda": lambda args, cfg, out: run_sweep_lambda(
        cfg, out, args["lambdas"], seeds=args.get("seeds"), total_timesteps=args.get("total_timesteps"),
        eval_timesteps=args.get("eval_timesteps"),
    ),
}
