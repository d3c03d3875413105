"""
macad – actor/learner runtime

Key ideas
---------
1. **Independence** – the loop only relies on abstract interfaces:
      • ``JointEnv``          – ``reset(seed)`` and ``step(actions)`` over agent-id dicts
      • ``ProgressRenderer``  – ``start``, ``on_episode`` and ``stop``
   so the driving environment, the grid intersection and any UI plug in.

2. **Decoupled but deterministic** – workers (actors) act on published,
   versioned, read-only parameter snapshots and refresh them at a fixed
   cadence; learners update their own models and publish new snapshots.
   Everything runs round-robin on one thread, so a run is a pure function
   of (config, seed).

3. **Single Responsibility** – the loop coordinates; update rules live in
   ``macad_learn``, logging in ``macad_logging`` and rendering in ``macad_ui``.
"""
from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Protocol, Tuple

import numpy as np

from macad_env_id import DEFAULT_REGISTRY, EnvRegistry, parse_env_id
from macad_errors import BadConfig, RuntimeFailure, ShapeMismatch
from macad_grid import GridIntersectionEnv
from macad_learn import (
    DISCRETIZERS,
    ActorCritic,
    Architecture,
    LearnerConfig,
    LearnerTopology,
    MLPQ,
    TabularQ,
    Transition,
    act_epsilon_greedy,
    configure_architecture,
    pg_update,
    q_update,
)
from macad_logging import metrics_log_json, system_log, utc_stamp
from macad_pomg import JointStepResult, MultiAgentDrivingEnv


# ---------------------------------------------------------------------------
# Protocols – minimal contracts expected from collaborators
# ---------------------------------------------------------------------------

class JointEnv(Protocol):
    """Anything with the dict-keyed joint reset/step API."""

    agent_ids: List[str]
    observation_size: int
    n_actions: int
    max_steps: int

    def reset(self, seed: int = 0) -> Dict[str, np.ndarray]: ...

    def step(self, actions: Mapping[str, int]) -> JointStepResult: ...


class ProgressRenderer(Protocol):
    """Subset of UI methods the training loop calls."""

    def start(self, total: Optional[int], description: str) -> None: ...

    def on_episode(self, episode: int, team_reward: float, env_steps: int) -> None: ...

    def stop(self) -> None: ...


# ---------------------------------------------------------------------------
# Environments and algorithms
# ---------------------------------------------------------------------------

def make_env(env_id: str, registry: EnvRegistry = DEFAULT_REGISTRY,
             overrides: Optional[Mapping[str, Any]] = None) -> JointEnv:
    spec = registry.lookup(parse_env_id(env_id))
    if spec.kind == "grid":
        return GridIntersectionEnv.from_env_id(env_id, registry, overrides)
    return MultiAgentDrivingEnv.from_env_id(env_id, registry, overrides)


def discretizer_name(env: JointEnv) -> str:
    return "rounding" if isinstance(env, GridIntersectionEnv) else "driving"


def _make_discretizer(name: str, env_obs_slots: int):
    if name == "driving":
        return DISCRETIZERS["driving"](max_slots=env_obs_slots)
    return DISCRETIZERS[name]()


@dataclass(frozen=True)
class Algorithm:
    name: str
    value_based: bool
    architecture: Architecture
    also_allows: Tuple[Architecture, ...] = ()

    def check_architecture(self, architecture: Architecture) -> None:
        if architecture != self.architecture and architecture not in self.also_allows:
            allowed = [self.architecture.value, *(a.value for a in self.also_allows)]
            raise BadConfig(f"'{self.name}' cannot train the {architecture.value} architecture",
                            algo=self.name, architecture=architecture.value, allowed=allowed)


ALGOS: Dict[str, Algorithm] = {
    "independent_q": Algorithm("independent_q", True, Architecture.INDEPENDENT, (Architecture.SHARED_PARAMETERS,)),
    "central_ac": Algorithm("central_ac", False, Architecture.CENTRALIZED),
    "shared_policy": Algorithm("shared_policy", False, Architecture.SHARED_POLICY),
}


def get_algorithm(name: str) -> Algorithm:
    try:
        return ALGOS[name]
    except KeyError:
        raise BadConfig(f"unknown algo '{name}'", algo=name, choices=sorted(ALGOS)) from None


def model_factory(algo: Algorithm, config: LearnerConfig, obs_dim: int, n_actions: int,
                  seed: int, discretizer: str = "rounding", max_slots: int = 8) -> Callable[[str, int], Any]:
    """Build models with per-block seeds derived from (seed, block ordinal)."""

    def build(key: str, index: int) -> Any:
        rng = np.random.default_rng([seed, 3, index])
        if algo.value_based:
            if config.tabular:
                return TabularQ(n_actions, _make_discretizer(discretizer, max_slots))
            return MLPQ(obs_dim, n_actions, config.hidden_width, rng, config.optimizer)
        if config.tabular:
            raise BadConfig(f"'{algo.name}' has no tabular form", algo=algo.name)
        return ActorCritic(obs_dim, n_actions, config.hidden_width, rng, config.optimizer)

    return build


def _env_slots(env: JointEnv) -> int:
    config = getattr(env, "config", None)
    return config.observation.max_slots if config is not None else 0


def episode_seed(seed: int, worker: int, episode: int) -> int:
    return int(np.random.SeedSequence([seed, worker, episode]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Parameter publication
# ---------------------------------------------------------------------------

class ParameterServer:
    """Latest read-only snapshot per parameter block, swapped atomically."""

    def __init__(self) -> None:
        self._snapshots: Dict[str, Any] = {}
        self._lock = threading.Lock()

    def publish(self, key: str, snapshot: Any) -> None:
        with self._lock:
            current = self._snapshots.get(key)
            if current is not None and snapshot.version < current.version:
                raise RuntimeFailure(f"stale publish for '{key}'", key=key)
            self._snapshots = {**self._snapshots, key: snapshot}

    def fetch(self, key: str) -> Any:
        with self._lock:
            return self._snapshots[key]


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class TrainingReport:
    agents: List[str]
    episode_rewards: Dict[str, List[float]] = field(default_factory=dict)
    episode_lengths: List[int] = field(default_factory=list)
    collisions: List[int] = field(default_factory=list)
    successes: List[bool] = field(default_factory=list)
    env_steps: int = 0
    updates: int = 0
    wall_clock: Dict[str, Any] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for agent in self.agents:
            self.episode_rewards.setdefault(agent, [])

    @property
    def episodes(self) -> int:
        return len(self.episode_lengths)

    @property
    def team_rewards(self) -> List[float]:
        return [sum(self.episode_rewards[a][k] for a in self.agents) for k in range(self.episodes)]

    @property
    def cumulative_mean(self) -> List[float]:
        rewards = np.asarray(self.team_rewards, dtype=np.float64)
        return (np.cumsum(rewards) / np.arange(1, len(rewards) + 1)).tolist()

    @property
    def cumulative_max(self) -> List[float]:
        rewards = self.team_rewards
        return np.maximum.accumulate(rewards).tolist() if rewards else []

    def success_rate(self, last: Optional[int] = None) -> float:
        window = self.successes[-last:] if last else self.successes
        return float(np.mean(window)) if window else 0.0

    def to_json(self) -> Dict[str, Any]:
        return {
            "agents": self.agents,
            "episodes": self.episodes,
            "env_steps": self.env_steps,
            "updates": self.updates,
            "episode_rewards": self.episode_rewards,
            "team_rewards": self.team_rewards,
            "cumulative_mean": self.cumulative_mean,
            "cumulative_max": self.cumulative_max,
            "episode_lengths": self.episode_lengths,
            "collisions": self.collisions,
            "success_rate": self.success_rate(),
            "wall_clock": self.wall_clock,
            "config": self.config,
        }


@dataclass
class TrainingRun:
    report: TrainingReport
    topology: LearnerTopology
    header: Dict[str, Any]


# ---------------------------------------------------------------------------
# Actor / learner loop
# ---------------------------------------------------------------------------

@dataclass
class _Worker:
    index: int
    env: JointEnv
    rng: np.random.Generator
    obs: Optional[Dict[str, np.ndarray]] = None
    live: List[str] = field(default_factory=list)
    episode: int = 0
    steps: int = 0
    views: Dict[str, Any] = field(default_factory=dict)
    ep_rewards: Dict[str, float] = field(default_factory=dict)
    ep_collisions: Dict[str, int] = field(default_factory=dict)
    reached: Dict[str, bool] = field(default_factory=dict)
    ep_length: int = 0
    segments: Dict[str, List[Transition]] = field(default_factory=dict)


def config_hash(echo: Mapping[str, Any]) -> str:
    return hashlib.sha256(json.dumps(echo, sort_keys=True, default=str).encode("utf-8")).hexdigest()[:16]


def run_actor_learner(
    env_id: str,
    config: LearnerConfig,
    seed: int,
    budget_steps: Optional[int] = None,
    budget_episodes: Optional[int] = None,
    algo: str = "independent_q",
    *,
    registry: EnvRegistry = DEFAULT_REGISTRY,
    env_overrides: Optional[Mapping[str, Any]] = None,
    ui: Optional[ProgressRenderer] = None,
) -> TrainingRun:
    """Train until the step or episode budget runs out (whichever comes first)."""
    if budget_steps is None and budget_episodes is None:
        raise BadConfig("give a step budget, an episode budget or both")
    if (budget_steps or 0) < 0 or (budget_episodes or 0) < 0:
        raise BadConfig("budgets must be >= 0")
    algorithm = get_algorithm(algo)
    algorithm.check_architecture(config.architecture)
    workers = [
        _Worker(i, make_env(env_id, registry, env_overrides), np.random.default_rng([seed, 0, i]))
        for i in range(config.n_workers)
    ]
    first_env = workers[0].env
    agents = list(first_env.agent_ids)
    disc = discretizer_name(first_env)
    topology = configure_architecture(
        config, agents,
        model_factory(algorithm, config, first_env.observation_size, first_env.n_actions, seed, disc, _env_slots(first_env)),
    )
    learner_rng = np.random.default_rng([seed, 1])
    server = ParameterServer()
    for key, model in topology.models.items():
        server.publish(key, model.snapshot())

    echo = {"env_id": env_id, "algo": algo, "seed": seed, "budget_steps": budget_steps,
            "budget_episodes": budget_episodes, "learner": config.to_json(),
            "env_overrides": dict(env_overrides or {})}
    report = TrainingReport(agents=agents, config=echo)
    header = {
        "format": 1,
        "env_id": env_id,
        "algo": algo,
        "architecture": config.architecture.value,
        "config_hash": config_hash(echo),
        "agents": agents,
        "model_of": dict(topology.model_of),
        "obs_dim": first_env.observation_size,
        "n_actions": first_env.n_actions,
        "hidden_width": config.hidden_width,
        "model_kind": next(iter(topology.models.values())).kind,
        "discretizer": disc,
        "max_slots": _env_slots(first_env),
    }

    started, clock = utc_stamp(), time.perf_counter()
    total_steps = 0

    def budget_left() -> bool:
        return ((budget_steps is None or total_steps < budget_steps)
                and (budget_episodes is None or report.episodes < budget_episodes))

    def progress() -> float:
        fracs = []
        if budget_steps:
            fracs.append(total_steps / budget_steps)
        if budget_episodes:
            fracs.append(report.episodes / budget_episodes)
        return max(fracs) if fracs else 1.0

    def publish(key: str) -> None:
        model = topology.models[key]
        if topology.shared_block:
            topology.sync_shared(key)
            for other in topology.models:
                server.publish(other, topology.models[other].snapshot())
        else:
            server.publish(key, model.snapshot())

    def train_value(step_index: int) -> None:
        if step_index % config.train_every:
            return
        for key in sorted(topology.models):
            buffer = topology.buffers[key]
            if len(buffer) < config.batch_size:
                continue
            model = topology.models[key]
            q_update(model, buffer.sample(config.batch_size, learner_rng), config.gamma, config.lr, config.grad_clip)
            report.updates += 1
            if model.theta.version % config.target_sync_interval == 0:
                model.sync_target()
            publish(key)

    def train_policy(worker: _Worker) -> None:
        by_model: Dict[str, List[List[Transition]]] = {}
        for agent in sorted(worker.segments):
            segment = worker.segments[agent]
            if segment:
                by_model.setdefault(topology.model_of[agent], []).append(segment)
        worker.segments = {}
        for key in sorted(by_model):
            pg_update(topology.models[key], by_model[key], config.gamma, config.lr,
                      n_step=config.n_step, entropy_coeff=config.entropy_coeff,
                      vf_loss_coeff=config.vf_loss_coeff, grad_clip=config.grad_clip)
            report.updates += 1
            publish(key)

    if ui is not None:
        ui.start(budget_episodes if budget_episodes is not None else budget_steps,
                 "episodes" if budget_episodes is not None else "steps")
    system_log(f"training {algo} on {env_id} seed={seed} workers={config.n_workers} "
               f"architecture={config.architecture.value}")
    try:
        while budget_left():
            for worker in workers:
                if not budget_left():
                    break
                env = worker.env
                if worker.obs is None:
                    worker.obs = env.reset(episode_seed(seed, worker.index, worker.episode))
                    worker.live = sorted(worker.obs)
                    worker.ep_rewards = {a: 0.0 for a in agents}
                    worker.ep_collisions = {a: 0 for a in agents}
                    worker.reached = {a: False for a in agents}
                    worker.ep_length = 0
                    worker.segments = {}
                if worker.steps % config.refresh_interval == 0:
                    for key in sorted(topology.models):
                        view = server.fetch(key)
                        previous = worker.views.get(key)
                        if previous is not None and view.version < previous.version:
                            raise RuntimeFailure(f"worker {worker.index} saw version go backwards for '{key}'")
                        worker.views[key] = view

                epsilon = config.epsilon(progress())
                actions: Dict[str, int] = {}
                for agent in worker.live:
                    view = worker.views[topology.model_of[agent]]
                    if algorithm.value_based:
                        actions[agent] = act_epsilon_greedy(view, worker.obs[agent], epsilon, worker.rng)
                    else:
                        actions[agent] = view.sample(worker.obs[agent], worker.rng)

                result = env.step(actions)
                worker.steps += 1
                worker.ep_length += 1
                total_steps += 1
                team = sum(result.rewards.values())
                for agent in worker.live:
                    reward = team if topology.team_reward else result.rewards[agent]
                    t = Transition(agent, worker.obs[agent], actions[agent], reward,
                                   result.observations[agent], bool(result.dones[agent]))
                    if algorithm.value_based:
                        topology.buffer(agent).push(t)
                    else:
                        worker.segments.setdefault(agent, []).append(t)
                    worker.ep_rewards[agent] += result.rewards[agent]
                    info = result.info.get(agent, {})
                    worker.ep_collisions[agent] += len(info.get("collisions", []))
                    worker.reached[agent] = worker.reached[agent] or bool(info.get("goal_reached"))

                worker.obs = {**worker.obs, **result.observations}
                worker.live = [a for a in worker.live if not result.dones[a]]
                episode_over = result.all_done or not worker.live

                if algorithm.value_based:
                    train_value(total_steps)
                elif episode_over or worker.ep_length % config.n_step == 0:
                    train_policy(worker)

                if episode_over:
                    episode = report.episodes
                    for agent in agents:
                        metrics_log_json({
                            "episode": episode,
                            "agent": agent,
                            "reward": worker.ep_rewards[agent],
                            "length": worker.ep_length,
                            "collisions": worker.ep_collisions[agent],
                        })
                        report.episode_rewards[agent].append(worker.ep_rewards[agent])
                    report.episode_lengths.append(worker.ep_length)
                    report.collisions.append(sum(worker.ep_collisions.values()))
                    report.successes.append(all(worker.reached.values()) and not any(worker.ep_collisions.values()))
                    if ui is not None:
                        ui.on_episode(episode, sum(worker.ep_rewards.values()), total_steps)
                    worker.episode += 1
                    worker.obs = None
    finally:
        if ui is not None:
            ui.stop()

    report.env_steps = total_steps
    report.wall_clock = {"started": started, "finished": utc_stamp(),
                         "seconds": round(time.perf_counter() - clock, 3)}
    header["version"] = max(m.theta.version for m in topology.models.values())
    system_log(f"finished: {report.episodes} episodes, {total_steps} env steps, {report.updates} updates")
    return TrainingRun(report, topology, header)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path: Path, run: TrainingRun) -> Path:
    """``.npz`` with each model's state dict (one array per tensor) and the JSON header under ``header``."""
    path = Path(path)
    header = dict(run.header)
    arrays: Dict[str, np.ndarray] = {}
    keys: Dict[str, List[List[int]]] = {}
    for key, model in sorted(run.topology.models.items()):
        for name, values in model.state_dict().items():
            arrays[f"{key}.{name}"] = values
        if isinstance(model, TabularQ):
            keys[key] = [list(k) for k, _ in sorted(model.index.items(), key=lambda kv: kv[1])]
    if keys:
        header["tabular_keys"] = keys
    header["version"] = max(m.theta.version for m in run.topology.models.values())
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        np.savez(handle, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path: Path) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    """Return (header, models by block key)."""
    try:
        with np.load(Path(path), allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            arrays = {name: data[name] for name in data.files if name != "header"}
    except (OSError, ValueError, KeyError) as exc:
        raise BadConfig(f"cannot read checkpoint {path}: {exc}", path=str(path)) from exc
    algorithm = get_algorithm(header["algo"])
    config = LearnerConfig(hidden_width=header["hidden_width"], tabular=header["model_kind"] == "tabular")
    build = model_factory(algorithm, config, header["obs_dim"], header["n_actions"], 0,
                          header["discretizer"], header.get("max_slots", 8))
    models: Dict[str, Any] = {}
    for index, key in enumerate(sorted(set(header["model_of"].values()))):
        prefix = f"{key}."
        model = build(key, index)
        try:
            model.load_state({n[len(prefix):]: a for n, a in arrays.items() if n.startswith(prefix)},
                             header.get("tabular_keys", {}).get(key, []))
        except (KeyError, RuntimeError) as exc:
            raise BadConfig(f"checkpoint {path} does not fit block '{key}': {exc}", path=str(path)) from exc
        models[key] = model
    return header, models


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    episodes: int = 0
    success_rate: float = 0.0
    mean_reward: float = 0.0
    collisions: int = 0
    team_rewards: List[float] = field(default_factory=list)

    def to_json(self) -> Dict[str, Any]:
        return {"episodes": self.episodes, "success_rate": self.success_rate,
                "mean_reward": self.mean_reward, "collisions": self.collisions,
                "team_rewards": self.team_rewards}


def greedy_actions(header: Mapping[str, Any], views: Mapping[str, Any],
                   observations: Mapping[str, np.ndarray], live: List[str], rng: np.random.Generator) -> Dict[str, int]:
    return {a: act_epsilon_greedy(views[header["model_of"][a]], observations[a], 0.0, rng) for a in live}


def check_shapes(header: Mapping[str, Any], env: JointEnv) -> None:
    expected = (header["obs_dim"], header["n_actions"], sorted(header["agents"]))
    actual = (env.observation_size, env.n_actions, sorted(env.agent_ids))
    if expected != actual:
        raise ShapeMismatch(
            f"checkpoint expects obs_dim={expected[0]} n_actions={expected[1]} agents={expected[2]}, "
            f"env has obs_dim={actual[0]} n_actions={actual[1]} agents={actual[2]}",
            checkpoint=list(expected[:2]), env=list(actual[:2]),
        )


def evaluate(checkpoint: Path, env_id: str, episodes: int, seed: int,
             registry: EnvRegistry = DEFAULT_REGISTRY,
             env_overrides: Optional[Mapping[str, Any]] = None) -> EvalReport:
    """Greedy rollouts of a saved checkpoint."""
    header, models = load_checkpoint(checkpoint)
    env = make_env(env_id, registry, env_overrides)
    check_shapes(header, env)
    if episodes <= 0:
        return EvalReport()
    views = {key: model.snapshot() for key, model in models.items()}
    rng = np.random.default_rng([seed, 2])
    rewards: List[float] = []
    successes, collisions = 0, 0
    for episode in range(episodes):
        obs = env.reset(episode_seed(seed, 0, episode))
        live = sorted(obs)
        total, crashed = 0.0, False
        reached = {a: False for a in live}
        while live:
            result = env.step(greedy_actions(header, views, obs, live, rng))
            for agent in live:
                total += result.rewards[agent]
                info = result.info.get(agent, {})
                crashed = crashed or bool(info.get("collisions"))
                collisions += len(info.get("collisions", []))
                reached[agent] = reached[agent] or bool(info.get("goal_reached"))
            obs = {**obs, **result.observations}
            live = [a for a in live if not result.dones[a]]
            if result.all_done:
                break
        rewards.append(total)
        successes += int(all(reached.values()) and not crashed)
    return EvalReport(episodes, successes / episodes, float(np.mean(rewards)), collisions, rewards)
