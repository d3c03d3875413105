"""Environment naming grammar and registry.

An environment name reads, left to right::

    Hete Comm Coop PO Urban [Advrs|Async|Mgoal|Synch]* MA <USID> -v<version>

Every token class has a fixed width, so parsing is a single left-to-right scan
with no backtracking. Flags are optional, appear at most once each and must
follow the canonical order Advrs < Async < Mgoal < Synch; anything else in the
flag slot that is not the multiplicity token is rejected rather than folded
into the scenario ID.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Type, TypeVar

from macad_errors import DuplicateId, EmptyUsid, MissingVersion, UnknownEnvId, UnknownToken


class AgentNature(str, Enum):
    HETE = "Hete"
    HOMO = "Homo"


class CommNature(str, Enum):
    COMM = "Comm"
    NCOM = "Ncom"


class TaskNature(str, Enum):
    INDE = "Inde"
    COOP = "Coop"
    COMP = "Comp"
    MIXD = "Mixd"


class Observability(str, Enum):
    PO = "PO"
    FO = "FO"


class MapType(str, Enum):
    BRIDG = "Bridg"
    FREEW = "Freew"
    HIWAY = "Hiway"
    INTRX = "Intrx"
    INTST = "Intst"
    RURAL = "Rural"
    TUNNL = "Tunnl"
    URBAN = "Urban"


# Declaration order is the canonical order.
class Flag(str, Enum):
    ADVRS = "Advrs"
    ASYNC = "Async"
    MGOAL = "Mgoal"
    SYNCH = "Synch"


class Multiplicity(str, Enum):
    MA = "MA"
    SA = "SA"


_FLAG_RANK = {flag: rank for rank, flag in enumerate(Flag)}
_VERSION_SEP = "-v"

E = TypeVar("E", bound=Enum)


@dataclass(frozen=True)
class EnvId:
    """Parsed taxonomy attributes of an environment name."""

    agent_nature: AgentNature
    comm_nature: CommNature
    task_nature: TaskNature
    observability: Observability
    map_type: MapType
    flags: Tuple[Flag, ...]
    multiplicity: Multiplicity
    usid: str
    version: int

    def __post_init__(self) -> None:
        if len(set(self.flags)) != len(self.flags):
            raise ValueError(f"duplicate flags: {self.flags}")
        ordered = tuple(sorted(self.flags, key=_FLAG_RANK.__getitem__))
        object.__setattr__(self, "flags", ordered)
        if not _valid_usid(self.usid):
            raise ValueError(f"invalid scenario ID: {self.usid!r}")
        if self.version < 0:
            raise ValueError("version must be non-negative")

    def has_flag(self, flag: Flag) -> bool:
        return flag in self.flags

    def to_json(self) -> Dict[str, Any]:
        return {
            "agent_nature": self.agent_nature.value,
            "comm_nature": self.comm_nature.value,
            "task_nature": self.task_nature.value,
            "observability": self.observability.value,
            "map_type": self.map_type.value,
            "flags": [f.value for f in self.flags],
            "multiplicity": self.multiplicity.value,
            "usid": self.usid,
            "version": self.version,
        }

    def __str__(self) -> str:
        return format_env_id(self)


def _valid_usid(usid: str) -> bool:
    return bool(usid) and usid.isascii() and usid.isalnum()


def _take(env_id: str, pos: int, enum_cls: Type[E], width: int, expected: str) -> E:
    token = env_id[pos:pos + width]
    for member in enum_cls:
        if member.value == token:
            return member
    raise UnknownToken(env_id, pos, expected)


def parse_env_id(env_id: str) -> EnvId:
    """Parse an environment name into its taxonomy attributes."""
    if not env_id:
        raise UnknownToken(env_id, 0, "agent nature (Hete|Homo)")
    if not env_id.isascii():
        bad = next(i for i, ch in enumerate(env_id) if not ch.isascii())
        raise UnknownToken(env_id, bad, "ASCII character")

    pos = 0
    agent = _take(env_id, pos, AgentNature, 4, "agent nature (Hete|Homo)")
    pos += 4
    comm = _take(env_id, pos, CommNature, 4, "comm nature (Comm|Ncom)")
    pos += 4
    task = _take(env_id, pos, TaskNature, 4, "task nature (Inde|Coop|Comp|Mixd)")
    pos += 4
    obs = _take(env_id, pos, Observability, 2, "observability (PO|FO)")
    pos += 2
    map_type = _take(env_id, pos, MapType, 5, "map type (" + "|".join(m.value for m in MapType) + ")")
    pos += 5

    flags: List[Flag] = []
    while True:
        token = env_id[pos:pos + 2]
        if token in (Multiplicity.MA.value, Multiplicity.SA.value):
            multiplicity = Multiplicity(token)
            pos += 2
            break
        candidate = env_id[pos:pos + 5]
        flag = next((f for f in Flag if f.value == candidate), None)
        if flag is None or (flags and _FLAG_RANK[flag] <= _FLAG_RANK[flags[-1]]):
            raise UnknownToken(env_id, pos, "flag in canonical order (Advrs|Async|Mgoal|Synch) or multiplicity (MA|SA)")
        flags.append(flag)
        pos += 5

    sep = env_id.rfind(_VERSION_SEP)
    if sep < pos:
        raise MissingVersion(env_id)
    digits = env_id[sep + len(_VERSION_SEP):]
    if not digits or not digits.isdigit():
        raise MissingVersion(env_id)
    if len(digits) > 1 and digits[0] == "0":
        raise UnknownToken(env_id, sep + len(_VERSION_SEP), "version digits without leading zeros")

    usid = env_id[pos:sep]
    if not usid:
        raise EmptyUsid(env_id)
    for offset, ch in enumerate(usid):
        if not ch.isalnum():
            raise UnknownToken(env_id, pos + offset, "alphanumeric scenario ID")

    return EnvId(agent, comm, task, obs, map_type, tuple(flags), multiplicity, usid, int(digits))


def format_env_id(env_id: EnvId) -> str:
    """Emit the canonical environment name."""
    return "".join(
        [
            env_id.agent_nature.value,
            env_id.comm_nature.value,
            env_id.task_nature.value,
            env_id.observability.value,
            env_id.map_type.value,
            *(flag.value for flag in env_id.flags),
            env_id.multiplicity.value,
            env_id.usid,
            f"{_VERSION_SEP}{env_id.version}",
        ]
    )


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnvSpec:
    """What an environment name resolves to.

    ``scenario`` names a file under ``scenarios/`` (or is a path to one);
    ``actors`` holds per-actor config blocks keyed like the scenario's actors;
    ``env`` and ``adversarial`` override the matching ``config.json`` blocks.
    """

    scenario: str
    kind: str = "driving"
    actors: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)
    env: Mapping[str, Any] = field(default_factory=dict)
    adversarial: Mapping[str, Any] = field(default_factory=dict)
    action_repeat: Mapping[str, int] = field(default_factory=dict)
    description: str = ""


class EnvRegistry:
    """Canonical ID string -> :class:`EnvSpec`.

    Reads may run concurrently; registration takes the lock.
    """

    def __init__(self) -> None:
        self._entries: Dict[str, EnvSpec] = {}
        self._ids: Dict[str, EnvId] = {}
        self._lock = threading.Lock()

    def register(self, env_id: EnvId | str, spec: EnvSpec) -> "EnvRegistry":
        parsed = parse_env_id(env_id) if isinstance(env_id, str) else env_id
        key = format_env_id(parsed)
        with self._lock:
            if key in self._entries:
                raise DuplicateId(key)
            self._entries = {**self._entries, key: spec}
            self._ids = {**self._ids, key: parsed}
        return self

    def lookup(self, env_id: EnvId | str) -> EnvSpec:
        key = env_id if isinstance(env_id, str) else format_env_id(env_id)
        try:
            return self._entries[key]
        except KeyError:
            raise UnknownEnvId(key) from None

    def items(self) -> Iterable[Tuple[EnvId, EnvSpec]]:
        ids, entries = self._ids, self._entries
        return [(ids[key], entries[key]) for key in sorted(entries)]

    def __contains__(self, env_id: object) -> bool:
        key = env_id if isinstance(env_id, str) else format_env_id(env_id)  # type: ignore[arg-type]
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)


def register(registry: EnvRegistry, env_id: EnvId | str, spec: EnvSpec) -> EnvRegistry:
    return registry.register(env_id, spec)


_FILTER_FIELDS = {
    "agent_nature": AgentNature,
    "comm_nature": CommNature,
    "task_nature": TaskNature,
    "observability": Observability,
    "map_type": MapType,
    "multiplicity": Multiplicity,
}


def _matches(env_id: EnvId, key: str, value: Any) -> bool:
    if key in _FILTER_FIELDS:
        return getattr(env_id, key) == _FILTER_FIELDS[key](value)
    if key == "flags":
        wanted = {Flag(v) for v in ([value] if isinstance(value, str) else value)}
        return wanted.issubset(env_id.flags)
    if key == "usid":
        return env_id.usid == value
    if key == "version":
        return env_id.version == int(value)
    raise ValueError(f"unknown filter attribute '{key}'")


def list_envs(registry: EnvRegistry, env_filter: Optional[Mapping[str, Any]] = None) -> List[str]:
    """Canonical IDs matching every given attribute, sorted lexicographically."""
    env_filter = env_filter or {}
    return sorted(
        format_env_id(env_id)
        for env_id, _spec in registry.items()
        if all(_matches(env_id, key, value) for key, value in env_filter.items())
    )


# ---------------------------------------------------------------------------
# Built-in registrations
# ---------------------------------------------------------------------------

def default_actor_config(scenario: str, actor: str, actor_type: str = "vehicle_4W", **overrides: Any) -> Dict[str, Any]:
    """One actor block with the keys of the reference experiment listing."""
    block: Dict[str, Any] = {
        "type": actor_type,
        "enable_planner": True,
        "convert_images_to_video": False,
        "early_terminate_on_collision": True,
        "reward_function": "corl2017",
        "scenarios": f"{scenario}_{actor.upper()}",
        "manual_control": False,
        "auto_control": False,
        "camera_type": "rgb",
        "collision_sensor": "on",
        "lane_sensor": "on",
        "log_images": False,
        "log_measurements": False,
        "render": True,
        "x_res": 168,
        "y_res": 168,
        "use_depth_camera": False,
        "send_measurements": False,
    }
    block.update(overrides)
    return block


def _actors(scenario: str, types: Mapping[str, str], **overrides: Any) -> Dict[str, Dict[str, Any]]:
    return {name: default_actor_config(scenario, name, kind, **overrides) for name, kind in types.items()}


_THREE_CARS = {"car1": "vehicle_4W", "car2": "vehicle_4W", "car3": "vehicle_4W"}


def _register_builtin(registry: EnvRegistry) -> EnvRegistry:
    town = "SSUI3C_TOWN3"
    registry.register(
        "HomoNcomIndePOIntrxMASS3CTwn3-v0",
        EnvSpec(town, actors=_actors(town, _THREE_CARS),
                description="Stop-sign 3-way intersection, three non-communicating cars"),
    )
    registry.register(
        "HeteCommIndePOIntrxMAEnv-v0",
        EnvSpec(town, actors=_actors(town, {"car1": "vehicle_4W", "car2": "vehicle_2W", "car3": "vehicle_4W"}),
                description="Stop-sign 3-way intersection, mixed actor types sharing state over V2V"),
    )
    registry.register(
        "HeteCommCoopPOUrbanMAEnv-v0",
        EnvSpec(town, actors=_actors(town, {"car1": "vehicle_4W", "car2": "vehicle_2W", "car3": "vehicle_4W"},
                                      reward_function="corl2017_coop"),
                env={"alpha_weight": 0.5},
                description="Urban intersection, communicating cooperative actors"),
    )
    registry.register(
        "HomoNcomIndeFOHiwaySynchMAEnv-v0",
        EnvSpec("HIGHWAY_3C", actors=_actors("HIGHWAY_3C", _THREE_CARS),
                description="Two-lane one-way highway, fully observable, synchronous"),
    )
    registry.register(
        "HomoNcomIndePOIntrxSASS1CTwn3-v0",
        EnvSpec("SSUI1C_TOWN3", actors=_actors("SSUI1C_TOWN3", {"car3": "vehicle_4W"}),
                description="Single car crossing the stop-sign intersection"),
    )
    registry.register(
        "HomoCommIndePOIntrxAdvrsMASS3CTwn3-v0",
        EnvSpec(town, actors=_actors(town, _THREE_CARS),
                adversarial={"p_drop": 0.2, "p_noise": 0.1, "sigma": 0.05, "delay_ticks": 1},
                description="Stop-sign intersection with a lossy, delayed, noisy V2V channel"),
    )
    registry.register(
        "HomoNcomIndePOIntrxAsyncMASS3CTwn3-v0",
        EnvSpec(town, actors=_actors(town, _THREE_CARS), action_repeat={"car1": 1, "car2": 2, "car3": 3},
                description="Stop-sign intersection, agents acting at different frequencies"),
    )
    registry.register(
        "HomoNcomCompPOIntrxMASS3CTwn3-v0",
        EnvSpec(town, actors=_actors(town, _THREE_CARS, reward_function="corl2017_comp"),
                env={"alpha_weight": 0.5},
                description="Stop-sign intersection, each car rewarded against the others' progress"),
    )
    mixed = _actors(town, _THREE_CARS, reward_function="corl2017_mixed")
    for name, team in (("car1", "red"), ("car2", "red"), ("car3", "blue")):
        mixed[name]["team"] = team
    registry.register(
        "HomoNcomMixdPOIntrxMASS3CTwn3-v0",
        EnvSpec(town, actors=mixed, env={"alpha_weight": 0.5},
                description="Stop-sign intersection, car1 and car2 as a team against car3"),
    )
    registry.register(
        "HomoNcomIndePOIntrxMgoalMASS3CTwn3-v0",
        EnvSpec(town, actors=_actors(town, _THREE_CARS),
                description="Stop-sign intersection, each car's destination drawn per episode"),
    )
    registry.register(
        "HomoNcomIndeFOIntrxMAGrid2C-v0",
        EnvSpec("GRID_2C", kind="grid",
                description="Desk-scale two-agent grid intersection"),
    )
    return registry


DEFAULT_REGISTRY = _register_builtin(EnvRegistry())
