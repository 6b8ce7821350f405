"""Exception types raised across the package."""

from __future__ import annotations

from typing import Any


class SennRlError(Exception):
    """Root of every error raised by senn_rl."""


class ShapeError(SennRlError, ValueError):
    """Operand shapes are incompatible for an operation."""

    def __init__(self, op: str, left: tuple[int, ...], right: tuple[int, ...] | None = None) -> None:
        self.op = op
        self.left = tuple(left)
        self.right = tuple(right) if right is not None else None
        if right is None:
            message = f"{op}: unsupported shape {self.left}"
        else:
            message = f"{op}: incompatible shapes {self.left} and {self.right}"
        super().__init__(message)


class ConfigError(SennRlError, ValueError):
    """Run configuration failed schema or invariant validation."""

    def __init__(self, message: str, issues: list[dict[str, Any]] | None = None) -> None:
        super().__init__(message)
        self.issues = issues or []


class NonFiniteError(SennRlError, ValueError):
    """A leaf tensor was built from NaN or infinite values."""


class GradientError(SennRlError, ValueError):
    """A gradient request cannot be satisfied from the recorded trace."""


class EnvError(SennRlError, RuntimeError):
    """Invalid simulator configuration or an illegal step."""


class NonFiniteLossError(SennRlError, FloatingPointError):
    """A training loss became NaN or infinite."""

    def __init__(self, message: str, diagnostics: dict[str, Any]) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics


class CorruptCheckpointError(SennRlError, ValueError):
    """Checkpoint file is truncated, unparsable or structurally invalid."""


class CheckpointVersionError(SennRlError, ValueError):
    """Checkpoint was written by an unsupported format version."""


class CheckpointShapeError(SennRlError, ValueError):
    """Checkpoint layer shapes disagree with the declared architecture."""


class TraceFormatError(SennRlError, ValueError):
    """Trace header or record does not match the expected schema or dimensions."""


class ManifestSealedError(SennRlError, RuntimeError):
    """A sealed run manifest cannot be modified."""
