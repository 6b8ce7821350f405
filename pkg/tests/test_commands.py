"""End-to-end tests for the command layer on tiny configurations."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any

import pytest

from senn_rl.__main__ import main
from senn_rl.commands import (
    CommandSummary,
    run_attrib_compare,
    run_eval,
    run_explain_global,
    run_explain_local,
    run_lipschitz,
    run_rerun,
    run_sweep_lambda,
    run_train,
)

TINY_CONFIG: dict[str, Any] = {
    "sim": {"episode_length": 10},
    "ppo": {
        "total_timesteps": 64,
        "n_envs": 2,
        "horizon": 16,
        "minibatch_size": 32,
        "epochs": 1,
        "hidden_sizes": [8],
        "eval_interval": 0,
        "eval_timesteps": 10,
    },
    "explain": {
        "eval_timesteps": 20,
        "k": 3,
        "k_min": 2,
        "k_max": 4,
        "ig_steps": 16,
        "gradshap_samples": 8,
    },
    "lipschitz": {"anchors": 5, "iterations": 3},
}


def _issue_codes(summary: CommandSummary) -> set[str]:
    return {issue.code for issue in summary.issues}


def _persisted(summary: CommandSummary) -> dict[str, Any]:
    return json.loads((Path(summary.run_dir) / "summary.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="module")
def trained(tmp_path_factory: pytest.TempPathFactory) -> dict[str, Path]:
    """Train one SENN and one DNN arm and evaluate the SENN once."""
    root = tmp_path_factory.mktemp("runs")
    senn = run_train(TINY_CONFIG, root, seed=0)
    dnn = run_train(TINY_CONFIG, root, seed=0, actor="dnn")
    assert senn.status == "passed" and dnn.status == "passed"
    senn_checkpoint = Path(senn.run_dir) / "checkpoint.json"
    evaluated = run_eval(senn_checkpoint, TINY_CONFIG, root)
    assert evaluated.status == "passed"
    return {
        "root": root,
        "senn": senn_checkpoint,
        "dnn": Path(dnn.run_dir) / "checkpoint.json",
        "train_manifest": Path(senn.run_dir) / "manifest.json",
        "eval_manifest": Path(evaluated.run_dir) / "manifest.json",
        "trace": Path(evaluated.run_dir) / "trace.jsonl",
    }


def test_train_writes_checkpoint_metrics_and_sealed_manifest(trained: dict[str, Path]) -> None:
    """A training run leaves a checkpoint, a metric row per update and a sealed manifest."""
    run_dir = trained["senn"].parent
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["status"] == "passed"
    assert manifest["sealed_at"]
    assert set(manifest["artifacts"]) == {"checkpoint.json", "metrics.jsonl"}
    assert manifest["outputs"]["updates"] == 2
    assert manifest["seeds"]["ppo"] == 0

    rows = [json.loads(line) for line in (run_dir / "metrics.jsonl").read_text(encoding="utf-8").splitlines()]
    assert [row["update"] for row in rows] == [1, 2]
    assert {"policy_loss", "value_loss", "entropy", "robustness", "approx_kl", "clip_fraction"} <= set(rows[0])
    assert (run_dir / "summary.md").read_text(encoding="utf-8").startswith("## senn-rl train - passed")


def test_eval_writes_trace_and_heuristic_baseline(trained: dict[str, Path]) -> None:
    """Evaluation compares to the heuristic and traces every UE-step."""
    run_dir = trained["trace"].parent
    report = json.loads((run_dir / "eval.json").read_text(encoding="utf-8"))
    assert report["policy"]["n_episodes"] == 2
    assert report["heuristic"]["policy"] == "heuristic"
    lines = trained["trace"].read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1 + 20 * 3
    assert json.loads(lines[0])["schema"] == "senn-trace/1"


def test_dnn_eval_skips_the_trace(trained: dict[str, Path], tmp_path: Path) -> None:
    """DNN arms evaluate normally but produce no decision trace."""
    summary = run_eval(trained["dnn"], TINY_CONFIG, tmp_path)
    assert summary.status == "passed"
    assert "TRACE_SKIPPED" in _issue_codes(summary)
    assert not (Path(summary.run_dir) / "trace.jsonl").exists()


def test_explain_local_tables(trained: dict[str, Path], tmp_path: Path) -> None:
    """One row per UE, action and feature."""
    summary = run_explain_local(trained["senn"], TINY_CONFIG, tmp_path, step=3)
    assert summary.status == "passed"
    with (Path(summary.run_dir) / "local_explanation.csv").open(encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 3 * 4 * 13
    payload = json.loads((Path(summary.run_dir) / "local_explanation.json").read_text(encoding="utf-8"))
    assert payload["step"] == 3
    assert len(payload["records"]) == 3


def test_explain_local_rejects_dnn(trained: dict[str, Path], tmp_path: Path) -> None:
    """A DNN checkpoint has nothing to explain intrinsically."""
    summary = run_explain_local(trained["dnn"], TINY_CONFIG, tmp_path)
    assert summary.exit_code == 3
    assert "NOT_SELF_EXPLAINING" in _issue_codes(summary)


def test_explain_global_outputs(trained: dict[str, Path], tmp_path: Path) -> None:
    """Effect tables per action, k sweep, clusters, importance and bias."""
    summary = run_explain_global(trained["trace"], TINY_CONFIG, tmp_path, checkpoint=trained["senn"])
    assert summary.status == "passed"
    run_dir = Path(summary.run_dir)
    for label in ("no_action", "toggle_bs1", "toggle_bs2", "toggle_bs3"):
        assert (run_dir / f"effects_{label}.csv").is_file()
    for name in ("k_sweep.csv", "clusters.json", "contingency.csv", "importance.csv", "bias.json"):
        assert (run_dir / name).is_file(), name
    clusters = json.loads((run_dir / "clusters.json").read_text(encoding="utf-8"))
    assert clusters["k"] == 3
    assert sum(clusters["sizes"]) == 60
    with (run_dir / "k_sweep.csv").open(encoding="utf-8") as handle:
        assert [row["k"] for row in csv.DictReader(handle)] == ["2", "3", "4"]
    assert summary.outputs["record_count"] == 60


def test_explain_global_rejects_foreign_checkpoint(trained: dict[str, Path], tmp_path: Path) -> None:
    """A trace paired with another policy's checkpoint is a configuration error."""
    other = run_train(TINY_CONFIG, tmp_path, seed=5)
    summary = run_explain_global(
        trained["trace"], TINY_CONFIG, tmp_path, checkpoint=Path(other.run_dir) / "checkpoint.json"
    )
    assert summary.exit_code == 2
    assert "TRACE_CHECKPOINT_MISMATCH" in _issue_codes(summary)


def test_explain_global_on_empty_trace(trained: dict[str, Path], tmp_path: Path) -> None:
    """A header-only trace fails with EMPTY_TRACE."""
    empty = tmp_path / "empty.jsonl"
    empty.write_text(trained["trace"].read_text(encoding="utf-8").splitlines()[0] + "\n", encoding="utf-8")
    summary = run_explain_global(empty, TINY_CONFIG, tmp_path)
    assert summary.status == "failed_processing"
    assert "EMPTY_TRACE" in _issue_codes(summary)


def test_lipschitz_over_trace_anchors(trained: dict[str, Path], tmp_path: Path) -> None:
    """The estimate covers the requested anchors and is nonnegative."""
    summary = run_lipschitz(trained["senn"], trained["trace"], TINY_CONFIG, tmp_path)
    assert summary.status == "passed"
    payload = json.loads((Path(summary.run_dir) / "lipschitz.json").read_text(encoding="utf-8"))
    assert payload["anchor_count"] == 5
    assert payload["global_max"] >= payload["mean"] >= 0.0


def test_attrib_compare_tables(trained: dict[str, Path], tmp_path: Path) -> None:
    """Every compared action gets a per-feature table across methods."""
    summary = run_attrib_compare(trained["senn"], trained["trace"], TINY_CONFIG, tmp_path, max_records=10)
    assert summary.status == "passed"
    compared = summary.outputs["compared_actions"]
    assert compared
    payload = json.loads((Path(summary.run_dir) / "attribution_compare.json").read_text(encoding="utf-8"))
    assert set(payload) == set(compared)
    first = payload[compared[0]]
    assert first["methods"][:3] == ["ixg", "ig", "gradshap"]
    assert len(first["table"]) == 13


def test_attrib_compare_with_full_matrix_clusters(trained: dict[str, Path], tmp_path: Path) -> None:
    """Full-matrix importance vectors contribute the chosen action's row to each comparison."""
    config = {**TINY_CONFIG, "explain": {**TINY_CONFIG["explain"], "cluster_target": "full_matrix"}}
    summary = run_attrib_compare(trained["senn"], trained["trace"], config, tmp_path, max_records=10)
    assert summary.status == "passed", summary.issues
    payload = json.loads((Path(summary.run_dir) / "attribution_compare.json").read_text(encoding="utf-8"))
    assert payload
    for table in payload.values():
        assert len(table["table"]) == 13
        assert all(len(row) == len(table["methods"]) for row in table["table"])


def test_invalid_config_fails_with_config_status(tmp_path: Path) -> None:
    """Schema violations map to failed_config and still persist a summary."""
    summary = run_train({"ppo": {"gamma": 2.0}}, tmp_path)
    assert summary.status == "failed_config"
    assert summary.exit_code == 2
    persisted = _persisted(summary)
    assert persisted["issues"][0]["code"] == "CONFIG_INVALID"
    assert "gamma" in persisted["issues"][0]["message"]


def test_missing_checkpoint_is_a_processing_failure(tmp_path: Path) -> None:
    """An unreadable checkpoint aborts the command."""
    summary = run_eval(tmp_path / "nope.json", TINY_CONFIG, tmp_path)
    assert summary.exit_code == 3
    assert "CHECKPOINT_LOAD_FAILED" in _issue_codes(summary)


def test_scenario_mismatch_is_a_config_failure(trained: dict[str, Path], tmp_path: Path) -> None:
    """Evaluating on a different scenario than training is refused."""
    config = {**TINY_CONFIG, "sim": {"episode_length": 10, "ue_speed": 20.0}}
    summary = run_eval(trained["senn"], config, tmp_path)
    assert summary.status == "failed_config"
    assert "SIM_FINGERPRINT_MISMATCH" in _issue_codes(summary)


def test_sweep_lambda_cells_and_aggregate(tmp_path: Path) -> None:
    """One cell per lambda and seed, aggregated per lambda."""
    summary = run_sweep_lambda(TINY_CONFIG, tmp_path, [0.0, 0.01], seeds=[0], eval_timesteps=10)
    assert summary.status == "passed"
    run_dir = Path(summary.run_dir)
    with (run_dir / "sweep_lambda.csv").open(encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    assert [float(row["robustness_lambda"]) for row in rows] == [0.0, 0.01]
    assert all(row["cells"] == "1" for row in rows)
    assert len(list((run_dir / "checkpoints").glob("*.json"))) == 2


def test_sweep_lambda_needs_two_values(tmp_path: Path) -> None:
    """A single lambda is a configuration error."""
    summary = run_sweep_lambda(TINY_CONFIG, tmp_path, [0.1])
    assert summary.status == "failed_config"


def test_rerun_reproduces_train_and_eval(trained: dict[str, Path], tmp_path: Path) -> None:
    """Re-executing a sealed manifest yields the same primary outputs."""
    for key in ("train_manifest", "eval_manifest"):
        check = run_rerun(trained[key], tmp_path).unwrap()
        assert check.mismatches == {}
        assert check.exit_code == 0
        report = json.loads((Path(check.rerun.run_dir) / "rerun_check.json").read_text(encoding="utf-8"))
        assert report["reproduced"] is True


def test_cli_exit_codes(trained: dict[str, Path], tmp_path: Path) -> None:
    """The CLI exits with the command status code."""
    config_path = tmp_path / "tiny.json"
    config_path.write_text(json.dumps(TINY_CONFIG), encoding="utf-8")
    out_dir = tmp_path / "cli"

    with pytest.raises(SystemExit) as excinfo:
        main(["eval", "--checkpoint", str(trained["senn"]), "--config", str(config_path), "--out-dir", str(out_dir)])
    assert excinfo.value.code == 0

    bad_path = tmp_path / "bad.json"
    bad_path.write_text(json.dumps({"explain": {"tau": 1.5}}), encoding="utf-8")
    with pytest.raises(SystemExit) as excinfo:
        main(["train", "--config", str(bad_path), "--out-dir", str(out_dir)])
    assert excinfo.value.code == 2

    with pytest.raises(SystemExit) as excinfo:
        main(["rerun", str(tmp_path / "missing.json"), "--out-dir", str(out_dir)])
    assert excinfo.value.code == 1
