#!/usr/bin/env python3
"""Write compact markdown and JSON summaries for the CI smoke pipeline."""

from __future__ import annotations

import argparse
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any


def main() -> None:
    """CLI entry point."""
    parser = argparse.ArgumentParser(description="Summarize senn-rl run directories")
    parser.add_argument("--root", required=True, help="Output root holding one directory per run")
    parser.add_argument("--summary-markdown", required=True, help="Markdown output path")
    parser.add_argument("--summary-json", required=True, help="JSON output path")
    args = parser.parse_args()

    payload = build_summary(Path(args.root))
    markdown_path = Path(args.summary_markdown)
    json_path = Path(args.summary_json)
    markdown_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    markdown_path.write_text(render_markdown(payload), encoding="utf-8")
    json_path.write_text(json.dumps(payload, indent=2), encoding="utf-8")


def build_summary(root: Path) -> dict[str, Any]:
    """Collect every run summary under ``root``, oldest run id first."""
    runs = [read_run_summary(path) for path in sorted(root.glob("*/summary.json"))]
    statuses = [run["status"] for run in runs]
    overall_status = "passed" if statuses and all(status == "passed" for status in statuses) else "issues_detected"
    return {
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "root": str(root),
        "overall_status": overall_status,
        "runs": runs,
    }


def read_run_summary(summary_path: Path) -> dict[str, Any]:
    """Read one command summary, keeping scalar outputs only."""
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    outputs = {
        name: value
        for name, value in summary.get("outputs", {}).items()
        if isinstance(value, (int, float, str)) or value is None
    }
    return {
        "command": summary.get("command", "unknown"),
        "status": summary.get("status", "unknown"),
        "run_id": summary.get("run_id", summary_path.parent.name),
        "outputs": outputs,
        "issue_codes": [issue.get("code") for issue in summary.get("issues", [])],
        "summary_path": str(summary_path),
    }


def render_markdown(payload: dict[str, Any]) -> str:
    """Render the summary payload as markdown."""
    lines = [
        "# senn-rl smoke summary",
        "",
        f"- Generated: {payload['generated_at']}",
        f"- Root: `{payload['root']}`",
        f"- Overall status: `{payload['overall_status']}`",
        "",
        "## Runs",
        "",
    ]
    if not payload["runs"]:
        lines.append("- No run summaries found")
    for run in payload["runs"]:
        lines.append(f"- `{run['command']}` `{run['status']}` ({run['run_id']})")
        for name, value in sorted(run["outputs"].items()):
            lines.append(f"  - {name}: {value}")
        if run["issue_codes"]:
            lines.append(f"  - issues: {', '.join(str(code) for code in run['issue_codes'])}")
    lines.append("")
    return "\n".join(lines)


if __name__ == "__main__":
    main()
