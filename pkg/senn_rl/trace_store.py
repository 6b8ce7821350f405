"""Checkpoints, decision traces, run manifests and JSONL event streams.

All files are JSON or line-delimited JSON. Python's float repr round-trips
float64 exactly, so saved parameters and trace records reload bit-identically.
"""

from __future__ import annotations

import json
import sys
from collections.abc import Iterable, Iterator
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from jsonschema import Draft202012Validator
from returns.result import Failure, Result, Success
from ulid import ULID

from senn_rl import __version__
from senn_rl.autodiff import ParameterSet
from senn_rl.config import SCHEMA_DIR
from senn_rl.errors import (
    CheckpointShapeError,
    CheckpointVersionError,
    CorruptCheckpointError,
    ManifestSealedError,
    TraceFormatError,
)
from senn_rl.models import DecisionRecord
from senn_rl.ppo import Critic, joint_parameters
from senn_rl.senn import ActorPolicy, build_actor
from senn_rl.utils import json_dumps, sha256_file, utc_now_iso, write_text_atomic

CHECKPOINT_SCHEMA = "senn-checkpoint"
TRACE_SCHEMA = "senn-trace"
MANIFEST_SCHEMA = "senn-run-manifest"
FORMAT_MAJOR = 1


def _load_schema(name: str) -> dict[str, Any]:
    with (SCHEMA_DIR / name).open("r", encoding="utf-8") as handle:
        return json.load(handle)


def _schema_errors(payload: Any, schema_name: str) -> list[str]:
    validator = Draft202012Validator(_load_schema(schema_name))
    return [
        f"{'.'.join(str(part) for part in error.path) or 'root'}: {error.message}"
        for error in validator.iter_errors(payload)
    ]


def _check_version(tag: Any, expected: str, error: type[Exception]) -> None:
    """Accept ``<expected>/<major>[.<minor>]`` with a supported major."""
    if not isinstance(tag, str) or not tag.startswith(f"{expected}/"):
        raise error(f"unexpected schema tag {tag!r}; expected {expected}/{FORMAT_MAJOR}")
    major = tag.split("/", 1)[1].split(".", 1)[0]
    if major != str(FORMAT_MAJOR):
        raise error(f"unsupported {expected} major version {major!r}; this build reads {FORMAT_MAJOR}")


def _dump_params(params: ParameterSet) -> dict[str, Any]:
    return {name: {"shape": list(tensor.shape), "values": tensor.data.ravel().tolist()} for name, tensor in params.items()}


@dataclass(slots=True)
class LoadedCheckpoint:
    policy: ActorPolicy
    critic: Critic
    fingerprint: str
    sim_fingerprint: str
    created_at: str


def checkpoint_fingerprint(policy: ActorPolicy, critic: Critic) -> str:
    return joint_parameters(policy, critic).fingerprint()


def save_checkpoint(
    policy: ActorPolicy, critic: Critic, path: Path | str, sim_fingerprint: str = ""
) -> Result[str, Exception]:
    """Write actor and critic parameters atomically; returns the content fingerprint."""
    try:
        fingerprint = checkpoint_fingerprint(policy, critic)
        payload = {
            "schema": f"{CHECKPOINT_SCHEMA}/{FORMAT_MAJOR}",
            "created_at": utc_now_iso(),
            "code_version": __version__,
            "fingerprint": fingerprint,
            "sim_fingerprint": sim_fingerprint,
            "actor": {"architecture": policy.describe(), "params": _dump_params(policy.params)},
            "critic": {"architecture": critic.describe(), "params": _dump_params(critic.params)},
        }
        write_text_atomic(Path(path), json.dumps(payload, sort_keys=True))
        return Success(fingerprint)
    except (OSError, TypeError, ValueError) as exc:
        return Failure(exc)


def _restore(target: ParameterSet, stored: dict[str, Any], owner: str) -> None:
    if set(stored) != set(target.names()):
        raise CheckpointShapeError(
            f"{owner} parameter names differ: expected {sorted(target.names())}, found {sorted(stored)}"
        )
    arrays: dict[str, np.ndarray] = {}
    for name, tensor in target.items():
        shape = tuple(stored[name]["shape"])
        values = np.asarray(stored[name]["values"], dtype=np.float64)
        if shape != tensor.shape or values.size != int(np.prod(shape)):
            raise CheckpointShapeError(
                f"{owner}.{name}: declared shape {shape} with {values.size} values, architecture needs {tensor.shape}"
            )
        arrays[name] = values.reshape(shape)
    target.assign(arrays)


def load_checkpoint(path: Path | str) -> Result[LoadedCheckpoint, Exception]:
    """Rebuild actor and critic; corrupt, version and shape problems fail distinctly."""
    try:
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CorruptCheckpointError(f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise CorruptCheckpointError(f"{path} does not hold a checkpoint object")
        _check_version(payload.get("schema"), CHECKPOINT_SCHEMA, CheckpointVersionError)
        problems = _schema_errors(payload, "checkpoint.schema.json")
        if problems:
            raise CorruptCheckpointError(f"{path} is malformed: {'; '.join(problems[:5])}")

        actor_arch = payload["actor"]["architecture"]
        critic_arch = payload["critic"]["architecture"]
        rng = np.random.default_rng(0)
        try:
            policy = build_actor(
                actor_arch["kind"], actor_arch["n"], actor_arch["m"], actor_arch["hidden_sizes"], rng
            )
            critic = Critic(critic_arch["n"], critic_arch["hidden_sizes"], rng)
        except (KeyError, ValueError) as exc:
            raise CheckpointShapeError(f"{path} declares an unusable architecture: {exc}") from exc
        _restore(policy.params, payload["actor"]["params"], "actor")
        _restore(critic.params, payload["critic"]["params"], "critic")

        fingerprint = checkpoint_fingerprint(policy, critic)
        if fingerprint != payload["fingerprint"]:
            raise CorruptCheckpointError(f"{path} content does not match its fingerprint")
        return Success(
            LoadedCheckpoint(
                policy=policy,
                critic=critic,
                fingerprint=fingerprint,
                sim_fingerprint=payload.get("sim_fingerprint", ""),
                created_at=payload.get("created_at", ""),
            )
        )
    except (CorruptCheckpointError, CheckpointVersionError, CheckpointShapeError, OSError) as exc:
        return Failure(exc)


@dataclass(slots=True)
class TraceHeader:
    n: int
    m: int
    fingerprint: str
    sim_fingerprint: str = ""
    schema: str = f"{TRACE_SCHEMA}/{FORMAT_MAJOR}"
    created_at: str = field(default_factory=utc_now_iso)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def init_trace(path: Path | str, header: TraceHeader) -> Result[Path, Exception]:
    """Create (or truncate) a trace file holding only its header line."""
    try:
        target = Path(path)
        write_text_atomic(target, json_dumps(header.to_dict()) + "\n")
        return Success(target)
    except OSError as exc:
        return Failure(exc)


def _parse_header(line: str, path: Path) -> TraceHeader:
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"{path}: header is not valid JSON") from exc
    _check_version(payload.get("schema") if isinstance(payload, dict) else None, TRACE_SCHEMA, TraceFormatError)
    problems = _schema_errors(payload, "trace-header.schema.json")
    if problems:
        raise TraceFormatError(f"{path}: invalid header: {'; '.join(problems)}")
    return TraceHeader(
        n=payload["n"],
        m=payload["m"],
        fingerprint=payload["fingerprint"],
        sim_fingerprint=payload.get("sim_fingerprint", ""),
        schema=payload["schema"],
        created_at=payload.get("created_at", ""),
    )


def read_trace_header(path: Path | str) -> Result[TraceHeader | None, Exception]:
    """Header of a trace; ``None`` for a zero-byte file."""
    try:
        target = Path(path)
        with target.open("r", encoding="utf-8") as handle:
            first = handle.readline()
        if not first.strip():
            return Success(None)
        return Success(_parse_header(first, target))
    except (OSError, TraceFormatError) as exc:
        return Failure(exc)


def append_records(
    path: Path | str, records: Iterable[DecisionRecord], fingerprint: str | None = None
) -> Result[int, Exception]:
    """Append records, one complete line per write.

    A policy fingerprint that differs from the header only warns on stderr.
    """
    target = Path(path)
    header_result = read_trace_header(target)
    if isinstance(header_result, Failure):
        return header_result
    header = header_result.unwrap()
    if header is None:
        return Failure(TraceFormatError(f"{target}: trace has no header; call init_trace first"))
    if fingerprint is not None and fingerprint != header.fingerprint:
        print(
            f"Warning: appending records from policy {fingerprint[:12]} to a trace of policy "
            f"{header.fingerprint[:12]} ({target})",
            file=sys.stderr,
        )
    written = 0
    try:
        with target.open("a", encoding="utf-8") as handle:
            for record in records:
                if record.shape != (header.m, header.n):
                    raise TraceFormatError(
                        f"{target}: record dimensions {record.shape} do not match header {(header.m, header.n)}"
                    )
                handle.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
                handle.flush()
                written += 1
        return Success(written)
    except (OSError, TraceFormatError) as exc:
        return Failure(exc)


def read_trace(
    path: Path | str, action: int | None = None, episode: int | None = None
) -> Iterator[DecisionRecord]:
    """Stream records, optionally filtered by chosen action and episode.

    Raises TraceFormatError on malformed lines or records that disagree with the header.
    """
    target = Path(path)
    with target.open("r", encoding="utf-8") as handle:
        first = handle.readline()
        if not first.strip():
            return
        header = _parse_header(first, target)
        for number, line in enumerate(handle, start=2):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"{target}:{number}: not valid JSON") from exc
            if action is not None and payload.get("action") != action:
                continue
            if episode is not None and payload.get("episode") != episode:
                continue
            record = DecisionRecord.from_dict(payload)
            if record.shape != (header.m, header.n):
                raise TraceFormatError(f"{target}:{number}: record shape {record.shape} disagrees with header")
            yield record


def load_trace(
    path: Path | str, action: int | None = None, episode: int | None = None
) -> Result[list[DecisionRecord], Exception]:
    try:
        return Success(list(read_trace(path, action=action, episode=episode)))
    except (OSError, TraceFormatError) as exc:
        return Failure(exc)


@dataclass(slots=True)
class RunManifest:
    """Everything needed to rerun a command; immutable once sealed."""

    command: str
    arguments: dict[str, Any]
    config: dict[str, Any]
    seeds: dict[str, int]
    run_id: str = field(default_factory=lambda: str(ULID()))
    schema: str = f"{MANIFEST_SCHEMA}/{FORMAT_MAJOR}"
    code_version: str = __version__
    created_at: str = field(default_factory=utc_now_iso)
    sealed_at: str | None = None
    status: str = "running"
    artifacts: dict[str, dict[str, str]] = field(default_factory=dict)
    outputs: dict[str, Any] = field(default_factory=dict)

    @property
    def sealed(self) -> bool:
        return self.sealed_at is not None

    def _guard(self) -> None:
        if self.sealed:
            raise ManifestSealedError(f"run manifest {self.run_id} is sealed")

    def add_artifact(self, name: str, path: Path | str) -> None:
        self._guard()
        self.artifacts[name] = {"path": str(path)}

    def record_output(self, name: str, value: Any) -> None:
        self._guard()
        self.outputs[name] = value

    def seal(self, status: str) -> Result[RunManifest, Exception]:
        """Hash every artifact and freeze; fails if any artifact is missing."""
        try:
            self._guard()
            missing = [name for name, entry in self.artifacts.items() if not Path(entry["path"]).is_file()]
            if missing:
                return Failure(FileNotFoundError(f"artifacts missing at seal time: {', '.join(sorted(missing))}"))
            for entry in self.artifacts.values():
                entry["sha256"] = sha256_file(Path(entry["path"]))
            self.status = status
            self.sealed_at = utc_now_iso()
            return Success(self)
        except (ManifestSealedError, OSError) as exc:
            return Failure(exc)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def write_manifest(manifest: RunManifest, path: Path | str) -> Result[Path, Exception]:
    try:
        target = Path(path)
        write_text_atomic(target, json_dumps(manifest.to_dict(), pretty=True) + "\n")
        return Success(target)
    except (OSError, TypeError, ValueError) as exc:
        return Failure(exc)


def load_manifest(path: Path | str) -> Result[RunManifest, Exception]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        _check_version(payload.get("schema"), MANIFEST_SCHEMA, ValueError)
        problems = _schema_errors(payload, "run-manifest.schema.json")
        if problems:
            return Failure(ValueError(f"{path}: invalid manifest: {'; '.join(problems)}"))
        return Success(RunManifest(**payload))
    except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
        return Failure(exc)


def append_stream(path: Path | str, kind: str, payload: dict[str, Any]) -> Result[str, Exception]:
    """Append one ``{id, timestamp, kind, ...}`` line to a JSONL stream; returns the entry id."""
    entry_id = str(ULID())
    entry = {"id": entry_id, "timestamp": utc_now_iso(), "kind": kind, **payload}
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("a", encoding="utf-8") as handle:
            handle.write(json_dumps(entry) + "\n")
        return Success(entry_id)
    except OSError as exc:
        return Failure(Exception(f"Failed to write stream entry to {target}: {exc}"))
    except (TypeError, ValueError) as exc:
        return Failure(Exception(f"Failed to serialize stream entry: {exc}"))


def read_stream(path: Path | str) -> Result[list[dict[str, Any]], Exception]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return Success([json.loads(line) for line in lines if line.strip()])
    except (OSError, json.JSONDecodeError) as exc:
        return Failure(exc)
