"""CLI entry point for training, evaluating and explaining SENN policies.

Usage:
    senn-rl train --config samples/configs/desk_scale.json --seed 1
    senn-rl eval --checkpoint runs/<id>/checkpoint.json
    senn-rl explain-global --trace runs/<id>/trace.jsonl --checkpoint runs/<id>/checkpoint.json
    senn-rl sweep-lambda --lambdas 0 0.001 0.01 0.1 --seeds 0 1 2
    senn-rl rerun runs/<id>/manifest.json
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from returns.result import Failure

from senn_rl import __version__
from senn_rl.commands import (
    run_attrib_compare,
    run_eval,
    run_explain_global,
    run_explain_local,
    run_lipschitz,
    run_rerun,
    run_sweep_lambda,
    run_train,
)
from senn_rl.config import ACTOR_KINDS, default_out_dir


def main(argv: list[str] | None = None) -> None:
    """Dispatch CLI commands and exit with the command status code."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    out_root = Path(args.out_dir) if getattr(args, "out_dir", None) else default_out_dir()

    command = args.command
    if command == "train":
        summary = run_train(
            args.config,
            out_root,
            seed=args.seed,
            actor=args.actor,
            robustness_lambda=args.robustness_lambda,
            total_timesteps=args.total_timesteps,
        )
    elif command == "eval":
        summary = run_eval(args.checkpoint, args.config, out_root, seed=args.seed, timesteps=args.timesteps)
    elif command == "explain-local":
        summary = run_explain_local(args.checkpoint, args.config, out_root, step=args.step, seed=args.seed)
    elif command == "explain-global":
        summary = run_explain_global(
            args.trace,
            args.config,
            out_root,
            checkpoint=args.checkpoint,
            k=args.k,
            tau=args.tau,
            seed=args.seed,
        )
    elif command == "lipschitz":
        summary = run_lipschitz(
            args.checkpoint, args.trace, args.config, out_root, anchors=args.anchors, seed=args.seed
        )
    elif command == "attrib-compare":
        summary = run_attrib_compare(
            args.checkpoint, args.trace, args.config, out_root, max_records=args.max_records, seed=args.seed
        )
    elif command == "sweep-lambda":
        summary = run_sweep_lambda(
            args.config,
            out_root,
            args.lambdas,
            seeds=args.seeds,
            total_timesteps=args.total_timesteps,
            eval_timesteps=args.eval_timesteps,
        )
    elif command == "rerun":
        result = run_rerun(args.manifest, out_root)
        if isinstance(result, Failure):
            _fail(result.failure())
            return
        check = result.unwrap()
        for key, values in sorted(check.mismatches.items()):
            print(f"  mismatch {key}: {values['original']!r} != {values['rerun']!r}", file=sys.stderr)
        print(f"  reproduced: {not check.mismatches}")
        raise SystemExit(check.exit_code)
    else:
        parser.print_help()
        sys.exit(1)
    raise SystemExit(summary.exit_code)


def _build_parser() -> argparse.ArgumentParser:
    """Build the CLI parser."""
    parser = argparse.ArgumentParser(
        prog="senn-rl",
        description="Self-explaining PPO agents for mobile network connection management",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command")

    train = subparsers.add_parser("train", help="Train an actor arm with PPO")
    _add_shared_args(train)
    train.add_argument("--actor", choices=ACTOR_KINDS, help="Actor arm override")
    train.add_argument("--lambda", dest="robustness_lambda", type=float, help="Robustness loss factor override")
    train.add_argument("--total-timesteps", type=int, help="Training budget override (env steps over all envs)")

    evaluate = subparsers.add_parser("eval", help="Greedy evaluation with heuristic baseline and decision trace")
    _add_shared_args(evaluate)
    evaluate.add_argument("--checkpoint", required=True, help="Checkpoint written by train")
    evaluate.add_argument("--timesteps", type=int, help="Evaluation steps (default: explain.eval_timesteps)")

    local = subparsers.add_parser("explain-local", help="Relevance and effects of every UE at one step")
    _add_shared_args(local)
    local.add_argument("--checkpoint", required=True, help="Checkpoint written by train")
    local.add_argument("--step", type=int, default=0, help="Greedy steps to run before explaining (default: 0)")

    explain_global = subparsers.add_parser("explain-global", help="Effect distributions, clusters and importance")
    _add_shared_args(explain_global)
    explain_global.add_argument("--trace", required=True, help="Decision trace written by eval")
    explain_global.add_argument("--checkpoint", help="Optional checkpoint; must match the trace fingerprint")
    explain_global.add_argument("--k", type=int, help="Number of clusters override")
    explain_global.add_argument("--tau", type=float, help="Cluster set purity threshold override")

    lipschitz = subparsers.add_parser("lipschitz", help="Local Lipschitz estimate over trace anchors")
    _add_shared_args(lipschitz)
    lipschitz.add_argument("--checkpoint", required=True, help="Checkpoint written by train")
    lipschitz.add_argument("--trace", required=True, help="Decision trace written by eval")
    lipschitz.add_argument("--anchors", type=int, help="Anchor count override")

    compare = subparsers.add_parser("attrib-compare", help="Compare post-hoc and intrinsic attributions")
    _add_shared_args(compare)
    compare.add_argument("--checkpoint", required=True, help="Checkpoint written by train")
    compare.add_argument("--trace", required=True, help="Decision trace written by eval")
    compare.add_argument("--max-records", type=int, default=512, help="Records per action for post-hoc methods")

    sweep = subparsers.add_parser("sweep-lambda", help="Return and stability across robustness factors")
    sweep.add_argument("--config", help="Run config JSON (default: desk-scale defaults)")
    sweep.add_argument("--out-dir", help="Output root (default: $SENN_RL_OUT_DIR or ./runs)")
    sweep.add_argument("--lambdas", type=float, nargs="+", required=True, help="Robustness factors to sweep")
    sweep.add_argument("--seeds", type=int, nargs="+", help="Training seeds per lambda (default: ppo.seed)")
    sweep.add_argument("--total-timesteps", type=int, help="Training budget override per cell")
    sweep.add_argument("--eval-timesteps", type=int, help="Evaluation steps per cell")

    rerun = subparsers.add_parser("rerun", help="Re-execute a sealed run manifest and compare outputs")
    rerun.add_argument("manifest", help="Path to manifest.json")
    rerun.add_argument("--out-dir", help="Output root (default: $SENN_RL_OUT_DIR or ./runs)")

    return parser


def _add_shared_args(parser: argparse.ArgumentParser) -> None:
    """Add config, seed and output directory arguments."""
    parser.add_argument("--config", help="Run config JSON (default: desk-scale defaults)")
    parser.add_argument("--seed", type=int, help="Overrides ppo, explain and lipschitz seeds")
    parser.add_argument("--out-dir", help="Output root (default: $SENN_RL_OUT_DIR or ./runs)")


def _fail(error: Exception) -> None:
    """Print a CLI error and exit."""
    print(f"error: {error}", file=sys.stderr)
    sys.exit(1)


if __name__ == "__main__":
    main()
