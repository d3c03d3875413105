"""Multi-agent driving environment (partially observable Markov game).

Functional core (:func:`reset`, :func:`step`, :func:`encode_observation`,
:func:`exchange_messages`, :func:`perturb`, :func:`schedule`) over a mutable
:class:`WorldState`, plus two thin front ends: :class:`MultiAgentDrivingEnv`
(dict-keyed joint API) and :class:`SingleAgentDrivingEnv` (gymnasium API
for one-actor scenarios).
"""
from __future__ import annotations

import math
import operator
from collections.abc import Iterable
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Set, Tuple

import gymnasium
import numpy as np
import shapely
from gymnasium import spaces
from shapely.geometry import LineString

from macad_config import get_section, merge_overrides
from macad_env_id import (
    DEFAULT_REGISTRY,
    CommNature,
    EnvId,
    EnvRegistry,
    EnvSpec,
    Flag,
    Observability,
    parse_env_id,
)
from macad_errors import (
    ActionOutOfRange,
    BadConfig,
    BadSpec,
    EpisodeOver,
    NoPath,
    OutOfRange,
    UnknownAgentId,
)
from macad_logging import system_warn
from macad_rewards import (
    RewardShaping,
    RewardSignals,
    ShapingContext,
    compute_reward,
    compute_signals,
    shaping_for,
)
from macad_world import (
    COAST,
    DEFAULT_PARAMS,
    GOAL_RADIUS,
    DAMAGE_PER_MPS,
    N_ACTIONS,
    ActorPlacement,
    ActorState,
    ActorType,
    CollisionEvent,
    ControlCommand,
    MapModel,
    Route,
    Scenario,
    VehicleParams,
    decode_action,
    detect_collisions,
    footprint_polygon,
    load_map,
    load_scenario,
    plan_route,
    project,
    step_kinematics,
)

Observation = np.ndarray

POS_SCALE = 100.0  # m
DIST_SCALE = 50.0  # m
EGO_FEATURES = 11
SLOT_FEATURES = 7
NO_STOP_LINE = 1.0


class ScheduleMode(str, Enum):
    SYNCH = "Synch"
    ASYNC = "Async"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_HONORED_KEYS = {
    "type", "enable_planner", "early_terminate_on_collision", "reward_function",
    "scenarios", "collision_sensor", "lane_sensor", "render", "team",
}
_warned_keys: Set[str] = set()


def _on(value: Any) -> bool:
    if isinstance(value, str):
        return value.strip().lower() not in ("off", "false", "0", "")
    return bool(value)


@dataclass(frozen=True)
class ActorConfig:
    actor_type: ActorType = ActorType.VEHICLE_4W
    enable_planner: bool = True
    early_terminate_on_collision: bool = True
    reward_function: str = "corl2017"
    scenarios: str = ""
    collision_sensor: bool = True
    lane_sensor: bool = True
    render: bool = False
    team: str = ""
    extras: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def from_json(cls, actor: str, block: Mapping[str, Any]) -> "ActorConfig":
        extras = {k: v for k, v in block.items() if k not in _HONORED_KEYS}
        fresh = sorted(set(extras) - _warned_keys)
        if fresh:
            _warned_keys.update(fresh)
            system_warn(f"actor config keys kept but not interpreted: {', '.join(fresh)}")
        try:
            actor_type = ActorType(block.get("type", ActorType.VEHICLE_4W.value))
        except ValueError:
            raise BadSpec(f"{actor}: unknown actor type {block.get('type')!r}", actor=actor) from None
        config = cls(
            actor_type=actor_type,
            enable_planner=_on(block.get("enable_planner", True)),
            early_terminate_on_collision=_on(block.get("early_terminate_on_collision", True)),
            reward_function=str(block.get("reward_function", "corl2017")),
            scenarios=str(block.get("scenarios", "")),
            collision_sensor=_on(block.get("collision_sensor", "on")),
            lane_sensor=_on(block.get("lane_sensor", "on")),
            render=_on(block.get("render", False)),
            team=str(block.get("team", "")),
            extras=extras,
        )
        shaping_for(config.reward_function)  # reject unknown presets early
        return config


@dataclass(frozen=True)
class CommConfig:
    enabled: bool = False
    radius: float = 100.0


@dataclass(frozen=True)
class AdversarialConfig:
    p_drop: float = 0.0
    p_noise: float = 0.0
    sigma: float = 0.0
    delay_ticks: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_drop <= 1.0 and 0.0 <= self.p_noise <= 1.0):
            raise BadConfig("adversarial probabilities must lie in [0, 1]", p_drop=self.p_drop, p_noise=self.p_noise)
        if self.sigma < 0 or self.delay_ticks < 0:
            raise BadConfig("adversarial sigma and delay_ticks must be >= 0", sigma=self.sigma, delay_ticks=self.delay_ticks)


@dataclass(frozen=True)
class ObservationConfig:
    mode: Observability = Observability.PO
    sensing_radius: float = 40.0
    max_slots: int = 8
    occupancy_grid: bool = False
    grid_size: int = 21
    grid_cell: float = 2.0

    @property
    def size(self) -> int:
        grid = self.grid_size * self.grid_size if self.occupancy_grid else 0
        return EGO_FEATURES + SLOT_FEATURES * self.max_slots + grid


@dataclass(frozen=True)
class EnvConfig:
    scenario: Scenario
    actors: Mapping[str, ActorConfig]
    observation: ObservationConfig = ObservationConfig()
    comm: CommConfig = CommConfig()
    adversarial: Optional[AdversarialConfig] = None
    schedule: ScheduleMode = ScheduleMode.SYNCH
    action_repeat: Mapping[str, int] = field(default_factory=dict)
    alpha_weight: float = 0.0
    multi_goal: bool = False
    env_id: Optional[EnvId] = None

    @property
    def agent_ids(self) -> List[str]:
        return sorted(self.actors)

    @property
    def teams(self) -> Dict[str, str]:
        """Team of each agent; an agent without a ``team`` key plays alone."""
        return {name: actor.team or name for name, actor in self.actors.items()}

    @classmethod
    def from_spec(cls, spec: EnvSpec, env_id: Optional[EnvId] = None, overrides: Optional[Mapping[str, Any]] = None) -> "EnvConfig":
        """Resolve an :class:`EnvSpec` against ``config.json`` and experiment overrides."""
        overrides = dict(overrides or {})
        env = merge_overrides(merge_overrides(get_section("env"), dict(spec.env)), overrides.get("env"))
        scenario = load_scenario(spec.scenario)
        unknown = sorted(set(spec.actors) - set(scenario.actors))
        if unknown:
            raise BadSpec(f"actors {unknown} are not in scenario '{scenario.name}'", actors=unknown)
        actors = {name: ActorConfig.from_json(name, spec.actors.get(name, {})) for name in scenario.actors}

        observability = env_id.observability if env_id else Observability(env.get("observability", "PO"))
        try:
            observation = ObservationConfig(
                mode=observability,
                sensing_radius=float(env.get("sensing_radius", 40.0)),
                max_slots=int(env.get("max_slots", 8)),
                occupancy_grid=bool(env.get("occupancy_grid", False)),
                grid_size=int(env.get("grid_size", 21)),
                grid_cell=float(env.get("grid_cell", 2.0)),
            )
            comm_on = env_id.comm_nature == CommNature.COMM if env_id else bool(env.get("comm", False))
            comm = CommConfig(enabled=comm_on, radius=float(env.get("comm_radius", 100.0)))
            adversarial = None
            if (env_id and env_id.has_flag(Flag.ADVRS)) or (env_id is None and overrides.get("adversarial")):
                adv = merge_overrides(merge_overrides(get_section("adversarial"), dict(spec.adversarial)), overrides.get("adversarial"))
                adversarial = AdversarialConfig(
                    p_drop=float(adv.get("p_drop", 0.0)),
                    p_noise=float(adv.get("p_noise", 0.0)),
                    sigma=float(adv.get("sigma", 0.0)),
                    delay_ticks=int(adv.get("delay_ticks", 0)),
                )
            alpha_weight = float(env.get("alpha_weight", 0.0))
            if "max_steps" in env:
                scenario = replace(scenario, max_steps=int(env["max_steps"]))
        except (TypeError, ValueError) as exc:
            raise BadConfig(f"bad env settings: {exc}") from exc
        if observation.max_slots < 0 or observation.sensing_radius <= 0 or observation.grid_size < 1:
            raise BadConfig("sensing_radius > 0, max_slots >= 0 and grid_size >= 1 required")
        if scenario.max_steps < 1:
            raise BadConfig("max_steps must be >= 1", max_steps=scenario.max_steps)

        repeat = {name: int(spec.action_repeat.get(name, 1)) for name in actors}
        if any(k < 1 for k in repeat.values()):
            raise BadConfig("action_repeat k must be >= 1", action_repeat=repeat)
        async_mode = env_id is not None and env_id.has_flag(Flag.ASYNC)
        multi_goal = (env_id is not None and env_id.has_flag(Flag.MGOAL)) or _on(env.get("multi_goal", False))
        return cls(
            scenario=scenario,
            actors=actors,
            observation=observation,
            comm=comm,
            adversarial=adversarial,
            schedule=ScheduleMode.ASYNC if async_mode else ScheduleMode.SYNCH,
            action_repeat=repeat,
            alpha_weight=alpha_weight,
            multi_goal=multi_goal,
            env_id=env_id,
        )


def resolve_env(env_id: str, registry: EnvRegistry = DEFAULT_REGISTRY,
                overrides: Optional[Mapping[str, Any]] = None) -> EnvConfig:
    parsed = parse_env_id(env_id)
    spec = registry.lookup(parsed)
    if spec.kind != "driving":
        raise BadSpec(f"'{env_id}' is a {spec.kind} environment", env_id=env_id)
    return EnvConfig.from_spec(spec, parsed, overrides)


# ---------------------------------------------------------------------------
# State and results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Message:
    sender: str
    payload: Mapping[str, ActorState]
    staleness: int = 0

    def __post_init__(self) -> None:
        if self.staleness < 0:
            raise ValueError("staleness must be >= 0")


@dataclass
class EnvState:
    weather: int
    tick: int
    rng: np.random.Generator = field(repr=False)
    adversarial_rng: np.random.Generator = field(repr=False)


@dataclass
class WorldState:
    config: EnvConfig
    map_model: MapModel
    actor_states: Dict[str, ActorState]
    routes: Dict[str, Route]
    goals: Dict[str, Tuple[float, float]]
    env_state: EnvState
    shaping: Dict[str, RewardShaping]
    signals: Dict[str, RewardSignals] = field(default_factory=dict)
    last_commands: Dict[str, ControlCommand] = field(default_factory=dict)
    outbox: List[Tuple[int, str, Message]] = field(default_factory=list)
    params: VehicleParams = DEFAULT_PARAMS

    @property
    def agent_ids(self) -> List[str]:
        return sorted(self.actor_states)

    @property
    def tick(self) -> int:
        return self.env_state.tick

    @property
    def live_agents(self) -> List[str]:
        return [a for a in self.agent_ids if not self.actor_states[a].done]

    @property
    def all_done(self) -> bool:
        return not self.live_agents or self.tick >= self.config.scenario.max_steps


@dataclass
class JointStepResult:
    observations: Dict[str, Observation]
    rewards: Dict[str, float]
    dones: Dict[str, bool]
    info: Dict[str, Dict[str, Any]]
    all_done: bool = False


# ---------------------------------------------------------------------------
# Reset / step
# ---------------------------------------------------------------------------

def _sample_goal(map_model: MapModel, scenario: Scenario, placement: ActorPlacement,
                 rng: np.random.Generator) -> Tuple[float, float, float]:
    """Uniform pick among the scenario's destinations reachable from *placement.start*."""
    reachable = []
    for end in sorted({p.end for p in scenario.actors.values()}):
        try:
            plan_route(map_model, placement.start, end)
        except NoPath:
            continue
        reachable.append(end)
    if not reachable:
        return placement.end
    return reachable[int(rng.integers(len(reachable)))]


def reset(config: EnvConfig, seed: int, map_model: Optional[MapModel] = None,
          params: VehicleParams = DEFAULT_PARAMS) -> Tuple[WorldState, Dict[str, Observation]]:
    """Place every actor at its start with zero speed and plan its route."""
    scenario = config.scenario
    map_model = map_model if map_model is not None else load_map(scenario.map)
    scenario.validate(map_model)

    weather_seq, adv_seq = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(weather_seq)
    weather = int(scenario.weather_distribution[int(rng.integers(len(scenario.weather_distribution)))])

    states: Dict[str, ActorState] = {}
    routes: Dict[str, Route] = {}
    goals: Dict[str, Tuple[float, float]] = {}
    for agent in config.agent_ids:
        placement = scenario.actors[agent]
        if config.multi_goal:
            placement = replace(placement, end=_sample_goal(map_model, scenario, placement, rng))
        route = plan_route(map_model, placement.start, placement.end)
        segment, s = project(map_model, placement.start)
        tangent = map_model.lanes[segment].direction_at(s)
        states[agent] = ActorState(
            x=placement.start[0],
            y=placement.start[1],
            heading=math.atan2(tangent[1], tangent[0]),
            speed=0.0,
            actor_type=config.actors[agent].actor_type,
        )
        routes[agent] = route
        goals[agent] = route.goal if config.actors[agent].enable_planner else placement.end[:2]

    world = WorldState(
        config=config,
        map_model=map_model,
        actor_states=states,
        routes=routes,
        goals=goals,
        env_state=EnvState(weather=weather, tick=0, rng=rng, adversarial_rng=np.random.default_rng(adv_seq)),
        shaping={a: shaping_for(c.reward_function, config.alpha_weight, config.teams) for a, c in config.actors.items()},
        params=params,
    )
    world.signals = {agent: compute_signals(world, agent) for agent in config.agent_ids}
    observations = _emit_observations(world, config.agent_ids)
    return world, observations


def schedule(mode: ScheduleMode, tick: int, action_repeat: Mapping[str, int], agents: Iterable[str]) -> Set[str]:
    """Agents whose fresh action applies this tick."""
    agents = list(agents)
    if mode == ScheduleMode.SYNCH:
        return set(agents)
    return {a for a in agents if tick % action_repeat.get(a, 1) == 0}


def _decode(agent: str, action: Any) -> ControlCommand:
    try:
        return decode_action(action)
    except OutOfRange as exc:
        raise ActionOutOfRange(f"{agent}: {exc.message}", agent=agent, action=repr(action)) from None


def step(world: WorldState, actions: Mapping[str, int]) -> JointStepResult:
    """Advance the joint state one tick."""
    if world.all_done:
        raise EpisodeOver(f"episode finished at tick {world.tick}", tick=world.tick)
    unknown = sorted(set(actions) - set(world.actor_states))
    if unknown:
        raise UnknownAgentId(f"unknown agent ids {unknown}", agents=unknown)

    live = world.live_agents
    commands = {agent: _decode(agent, actions[agent]) for agent in live if agent in actions}
    acting = schedule(world.config.schedule, world.tick, world.config.action_repeat, live)

    for agent in live:
        if agent in acting and agent in commands:
            world.last_commands[agent] = commands[agent]
        cmd = world.last_commands.get(agent, COAST)
        world.actor_states[agent] = step_kinematics(world.actor_states[agent], cmd, world.params.dt, world.params)

    collisions = detect_collisions(world.actor_states, world.map_model, world.params)
    collided: Set[str] = set()
    for event in collisions:
        for agent in event.agents:
            if agent not in world.config.actors or not world.config.actors[agent].collision_sensor:
                continue
            collided.add(agent)
            state = world.actor_states[agent]
            world.actor_states[agent] = replace(state, accumulated_damage=state.accumulated_damage + DAMAGE_PER_MPS * event.relative_speed)

    world.env_state.tick += 1

    prev = world.signals
    cur = {agent: compute_signals(world, agent) for agent in live}
    rewards: Dict[str, float] = {}
    for agent in live:
        context = ShapingContext(agent=agent, prev=prev, cur=cur, env_state=world.env_state)
        rewards[agent] = compute_reward(prev[agent], cur[agent], world.shaping[agent], context)
    world.signals = {**prev, **cur}

    timeout = world.tick >= world.config.scenario.max_steps
    dones: Dict[str, bool] = {}
    reached: Dict[str, bool] = {}
    for agent in live:
        state = world.actor_states[agent]
        gx, gy = world.goals[agent]
        reached[agent] = math.hypot(gx - state.x, gy - state.y) <= GOAL_RADIUS
        crashed = agent in collided and world.config.actors[agent].early_terminate_on_collision
        dones[agent] = reached[agent] or crashed or timeout
    for agent in live:
        if dones[agent]:
            world.actor_states[agent] = replace(world.actor_states[agent], done=True)

    observations = _emit_observations(world, live)
    info = {
        agent: {
            "tick": world.tick,
            "acted": agent in acting and agent in commands,
            "signals": cur[agent].to_json(),
            "collisions": [_event_json(e) for e in collisions if agent in e.agents],
            "goal_reached": reached[agent],
            "weather": world.env_state.weather,
        }
        for agent in live
    }
    return JointStepResult(observations, rewards, dones, info, world.all_done)


def _event_json(event: CollisionEvent) -> Dict[str, Any]:
    return {"agents": list(event.agents), "relative_speed": event.relative_speed, "static": event.static}


def _emit_observations(world: WorldState, recipients: List[str]) -> Dict[str, Observation]:
    """Exchange messages, apply the adversarial channel, then encode for *recipients*."""
    config = world.config
    inbox = exchange_messages(world, config.comm)
    adv = config.adversarial
    if adv is not None:
        inbox, _ = perturb(adv, world.env_state.adversarial_rng, messages=inbox)
        if adv.delay_ticks:
            deliver_at = world.tick + adv.delay_ticks
            for agent in sorted(inbox):
                for msg in inbox[agent]:
                    world.outbox.append((deliver_at, agent, replace(msg, staleness=adv.delay_ticks)))
            due = [(t, a, m) for t, a, m in world.outbox if t <= world.tick]
            world.outbox = [(t, a, m) for t, a, m in world.outbox if t > world.tick]
            inbox = {agent: [m for _, a, m in due if a == agent] for agent in inbox}

    observations = {
        agent: encode_observation(config.observation.mode, world, agent, inbox.get(agent, []))
        for agent in recipients
    }
    if adv is not None:
        _, observations = perturb(adv, world.env_state.adversarial_rng, observations=observations,
                                  mask=continuous_mask(config.observation))
    return observations


# ---------------------------------------------------------------------------
# Sensing, communication, observation encoding
# ---------------------------------------------------------------------------

def visible_actors(world: WorldState, agent: str, radius: float) -> List[str]:
    """Live actors within *radius* of *agent* whose sight line no third footprint blocks."""
    ego = world.actor_states[agent]
    others = [a for a in world.agent_ids if a != agent and not world.actor_states[a].done]
    feet = {a: footprint_polygon(world.actor_states[a], world.params) for a in others}
    seen = []
    for target in others:
        st = world.actor_states[target]
        if math.hypot(st.x - ego.x, st.y - ego.y) > radius:
            continue
        sight = LineString([(ego.x, ego.y), (st.x, st.y)])
        if any(sight.intersects(feet[o]) for o in others if o != target):
            continue
        seen.append(target)
    return seen


def exchange_messages(world: WorldState, config: CommConfig) -> Dict[str, List[Message]]:
    live = world.live_agents
    inbox: Dict[str, List[Message]] = {agent: [] for agent in live}
    if not config.enabled:
        return inbox
    radius = world.config.observation.sensing_radius
    for sender in live:
        src = world.actor_states[sender]
        payload = {sender: src}
        if world.config.observation.mode == Observability.PO:
            payload.update({a: world.actor_states[a] for a in visible_actors(world, sender, radius)})
        else:
            payload.update({a: world.actor_states[a] for a in live})
        for recipient in live:
            if recipient == sender:
                continue
            dst = world.actor_states[recipient]
            if math.hypot(dst.x - src.x, dst.y - src.y) <= config.radius:
                inbox[recipient].append(Message(sender, dict(payload)))
    return inbox


def perturb(
    adv: AdversarialConfig,
    rng: np.random.Generator,
    messages: Optional[Mapping[str, List[Message]]] = None,
    observations: Optional[Mapping[str, Observation]] = None,
    mask: Optional[np.ndarray] = None,
) -> Tuple[Optional[Dict[str, List[Message]]], Optional[Dict[str, Observation]]]:
    """Drop messages with ``p_drop``; add N(0, sigma) noise to continuous entries with ``p_noise``.

    Draws happen in sorted agent order, one per message and two arrays per
    observation, whatever the probabilities.
    """
    kept_messages = None
    if messages is not None:
        kept_messages = {}
        for agent in sorted(messages):
            inbox = messages[agent]
            draws = rng.random(len(inbox))
            kept_messages[agent] = [msg for msg, u in zip(inbox, draws) if u >= adv.p_drop]
    noisy = None
    if observations is not None:
        noisy = {}
        for agent in sorted(observations):
            obs = observations[agent]
            hit = rng.random(obs.shape[0]) < adv.p_noise
            noise = rng.normal(0.0, 1.0, obs.shape[0]) * adv.sigma
            if mask is not None:
                hit &= mask
            noisy[agent] = np.where(hit, obs + noise, obs)
    return kept_messages, noisy


def continuous_mask(config: ObservationConfig) -> np.ndarray:
    """True where an observation entry is a continuous measurement."""
    mask = np.zeros(config.size, dtype=bool)
    mask[:EGO_FEATURES] = True
    mask[7] = False  # stop-line flag
    for slot in range(config.max_slots):
        base = EGO_FEATURES + slot * SLOT_FEATURES
        mask[base + 1:base + 6] = True
    return mask


def _to_ego(ego: ActorState, x: float, y: float) -> Tuple[float, float]:
    dx, dy = x - ego.x, y - ego.y
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    return c * dx + s * dy, -s * dx + c * dy


def encode_observation(mode: Observability, world: WorldState, agent: str, comm: List[Message]) -> Observation:
    """Fixed-size feature vector for *agent*.

    Layout: 11 ego entries, ``max_slots`` x 7 slot entries
    ``[valid, dx, dy, cos dh, sin dh, speed, staleness]`` for the other agents
    in sorted order, then the optional occupancy grid.
    """
    config = world.config.observation
    ego = world.actor_states[agent]
    route = world.routes[agent]
    minx, miny, maxx, maxy = world.map_model.bounds
    cx, cy = (minx + maxx) / 2, (miny + maxy) / 2
    stop = route.next_stop_distance(ego.position) if world.config.actors[agent].enable_planner else None
    gx, gy = _to_ego(ego, *world.goals[agent])
    ego_block = [
        (ego.x - cx) / POS_SCALE,
        (ego.y - cy) / POS_SCALE,
        math.cos(ego.heading),
        math.sin(ego.heading),
        ego.speed / world.params.max_speed,
        world.signals[agent].D if agent in world.signals else route.remaining_km(ego.position),
        min(stop / DIST_SCALE, NO_STOP_LINE) if stop is not None else NO_STOP_LINE,
        1.0 if stop is not None else 0.0,
        gx / DIST_SCALE,
        gy / DIST_SCALE,
        ego.accumulated_damage / 1000.0,
    ]

    others = [a for a in world.agent_ids if a != agent][: config.max_slots]
    known: Dict[str, Tuple[ActorState, int]] = {}
    if mode == Observability.FO:
        known = {a: (world.actor_states[a], 0) for a in others if not world.actor_states[a].done}
    else:
        for a in visible_actors(world, agent, config.sensing_radius):
            known[a] = (world.actor_states[a], 0)
        freshest: Dict[str, Message] = {}
        for msg in comm:
            if msg.sender == agent:
                continue
            if msg.sender not in freshest or msg.staleness < freshest[msg.sender].staleness:
                freshest[msg.sender] = msg
        for sender in sorted(freshest):
            msg = freshest[sender]
            for actor, state in msg.payload.items():
                if actor == agent or actor not in others or world.actor_states[actor].done:
                    continue
                if actor not in known or msg.staleness < known[actor][1]:
                    known[actor] = (state, msg.staleness)

    slots = np.zeros((config.max_slots, SLOT_FEATURES))
    for i, actor in enumerate(others):
        if actor not in known:
            continue
        state, staleness = known[actor]
        dx, dy = _to_ego(ego, state.x, state.y)
        dh = state.heading - ego.heading
        slots[i] = [1.0, dx / DIST_SCALE, dy / DIST_SCALE, math.cos(dh), math.sin(dh),
                    state.speed / world.params.max_speed, float(staleness)]

    parts = [np.asarray(ego_block, dtype=np.float64), slots.ravel()]
    if config.occupancy_grid:
        parts.append(occupancy_grid(world, agent, [known[a][0] for a in sorted(known)]))
    return np.concatenate(parts)


def occupancy_grid(world: WorldState, agent: str, actors: List[ActorState]) -> np.ndarray:
    """Ego-aligned N x N grid: 0 drivable, 0.5 off-road, 1 actor footprint."""
    config = world.config.observation
    ego = world.actor_states[agent]
    n, cell = config.grid_size, config.grid_cell
    offsets = (np.arange(n) - (n - 1) / 2) * cell
    fwd, lat = np.meshgrid(offsets[::-1], offsets, indexing="ij")
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    xs = ego.x + c * fwd - s * lat
    ys = ego.y + s * fwd + c * lat
    grid = np.where(shapely.contains_xy(world.map_model.drivable, xs, ys), 0.0, 0.5)
    for state in actors:
        grid = np.where(shapely.contains_xy(footprint_polygon(state, world.params), xs, ys), 1.0, grid)
    return grid.ravel()


# ---------------------------------------------------------------------------
# Front ends
# ---------------------------------------------------------------------------

class MultiAgentDrivingEnv:
    """Dict-keyed joint API: ``reset(seed) -> obs``, ``step(actions) -> JointStepResult``."""

    def __init__(self, config: EnvConfig, params: VehicleParams = DEFAULT_PARAMS) -> None:
        self.config = config
        self.params = params
        self.map_model = load_map(config.scenario.map)
        self.world: Optional[WorldState] = None

    @classmethod
    def from_env_id(cls, env_id: str, registry: EnvRegistry = DEFAULT_REGISTRY,
                    overrides: Optional[Mapping[str, Any]] = None) -> "MultiAgentDrivingEnv":
        return cls(resolve_env(env_id, registry, overrides))

    @property
    def agent_ids(self) -> List[str]:
        return self.config.agent_ids

    @property
    def observation_size(self) -> int:
        return self.config.observation.size

    @property
    def n_actions(self) -> int:
        return N_ACTIONS

    @property
    def max_steps(self) -> int:
        return self.config.scenario.max_steps

    def reset(self, seed: int = 0) -> Dict[str, Observation]:
        self.world, observations = reset(self.config, seed, self.map_model, self.params)
        return observations

    def step(self, actions: Mapping[str, int]) -> JointStepResult:
        if self.world is None:
            raise EpisodeOver("step() called before reset()")
        return step(self.world, actions)


class SingleAgentDrivingEnv(gymnasium.Env):
    """Gymnasium view of a one-actor scenario."""

    metadata = {"render_modes": []}

    def __init__(self, env_id: str = "HomoNcomIndePOIntrxSASS1CTwn3-v0",
                 registry: EnvRegistry = DEFAULT_REGISTRY,
                 overrides: Optional[Mapping[str, Any]] = None) -> None:
        super().__init__()
        self._env = MultiAgentDrivingEnv.from_env_id(env_id, registry, overrides)
        if len(self._env.agent_ids) != 1:
            raise BadSpec(f"'{env_id}' has {len(self._env.agent_ids)} actors; expected one", env_id=env_id)
        self.agent = self._env.agent_ids[0]
        self.action_space = spaces.Discrete(N_ACTIONS)
        self.observation_space = spaces.Box(-np.inf, np.inf, shape=(self._env.observation_size,), dtype=np.float64)

    def reset(self, *, seed: Optional[int] = None, options: Optional[dict] = None):
        super().reset(seed=seed)
        observations = self._env.reset(seed if seed is not None else 0)
        return observations[self.agent], {}

    def step(self, action):
        result = self._env.step({self.agent: operator.index(action)})
        info = result.info[self.agent]
        truncated = result.dones[self.agent] and info["tick"] >= self._env.max_steps and not info["goal_reached"] and not info["collisions"]
        terminated = result.dones[self.agent] and not truncated
        return result.observations[self.agent], result.rewards[self.agent], terminated, truncated, info
