"""Exception hierarchy shared by every macad module.

Each error knows its ``kind`` (the class name) and a dict of structured
details, so the CLI can turn any failure into a machine-readable JSON object
and pick the exit status from the branch of the hierarchy:

* :class:`ConfigError` -> exit status 2
* :class:`RuntimeFailure` -> exit status 3
"""
from __future__ import annotations

from typing import Any, Dict


class MacadError(Exception):
    """Base class; *details* are echoed verbatim into :meth:`to_json`."""

    exit_status = 3

    def __init__(self, message: str, **details: Any) -> None:
        self.message = message
        self.details: Dict[str, Any] = details
        super().__init__(message)

    @property
    def kind(self) -> str:
        return type(self).__name__

    def to_json(self) -> Dict[str, Any]:
        return {"kind": self.kind, "message": self.message, **self.details}


class ConfigError(MacadError):
    exit_status = 2


class RuntimeFailure(MacadError):
    exit_status = 3


# ---------------------------------------------------------------------------
# Environment IDs and registry
# ---------------------------------------------------------------------------

class UnknownToken(ConfigError):
    """Raised when an environment ID holds an unexpected token."""

    def __init__(self, env_id: str, position: int, expected: str) -> None:
        self.position = position
        self.expected = expected
        super().__init__(
            f"Unknown token at offset {position} of '{env_id}', expected {expected}",
            env_id=env_id,
            position=position,
            expected=expected,
        )


class MissingVersion(ConfigError):
    def __init__(self, env_id: str) -> None:
        super().__init__(f"'{env_id}' has no '-v<digits>' suffix", env_id=env_id)


class EmptyUsid(ConfigError):
    def __init__(self, env_id: str) -> None:
        super().__init__(f"'{env_id}' has an empty scenario ID", env_id=env_id)


class DuplicateId(ConfigError):
    def __init__(self, env_id: str) -> None:
        super().__init__(f"Environment '{env_id}' is already registered", env_id=env_id)


class UnknownEnvId(ConfigError):
    def __init__(self, env_id: str) -> None:
        super().__init__(f"Environment '{env_id}' is not registered", env_id=env_id)


class BadSpec(ConfigError):
    pass


class BadConfig(ConfigError):
    pass


# ---------------------------------------------------------------------------
# World and environment
# ---------------------------------------------------------------------------

class DisconnectedGraph(RuntimeFailure):
    pass


class OverlappingLanes(RuntimeFailure):
    pass


class BadStopLine(RuntimeFailure):
    pass


class NoPath(RuntimeFailure):
    pass


class OutOfRange(RuntimeFailure):
    pass


class ActionOutOfRange(OutOfRange):
    pass


class UnknownAgentId(RuntimeFailure):
    pass


class EpisodeOver(RuntimeFailure):
    pass


# ---------------------------------------------------------------------------
# Learning and tooling
# ---------------------------------------------------------------------------

class EmptyBatch(RuntimeFailure):
    pass


class EmptyTrajectory(RuntimeFailure):
    pass


class NoConvergence(RuntimeFailure):
    pass


class ShapeMismatch(RuntimeFailure):
    pass


class RenderIoError(RuntimeFailure):
    pass
