"""Two-agent grid intersection.

Each agent drives along its own one-cell-wide road; the roads cross in one
shared cell. Action 0 waits, action 1 advances one cell. Two agents in the
crossing cell at once collide.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from macad_env_id import DEFAULT_REGISTRY, EnvRegistry, parse_env_id
from macad_errors import ActionOutOfRange, BadSpec, EpisodeOver, UnknownAgentId
from macad_learn import TabularGame
from macad_pomg import JointStepResult

WAIT, ADVANCE = 0, 1


@dataclass(frozen=True)
class GridSpec:
    """Per agent: cells from start to the crossing, and road length to the goal."""

    crossing: Mapping[str, int]
    length: Mapping[str, int]
    horizon: int = 12
    goal_reward: float = 1.0
    collision_reward: float = -1.0
    step_reward: float = -0.05

    def __post_init__(self) -> None:
        if sorted(self.crossing) != sorted(self.length) or len(self.crossing) != 2:
            raise BadSpec("grid intersection needs exactly two agents with crossing and length")
        for agent in self.crossing:
            if not 0 < self.crossing[agent] < self.length[agent]:
                raise BadSpec(f"{agent}: crossing must lie strictly inside the road", agent=agent)
        if self.horizon < 1:
            raise BadSpec("horizon must be >= 1")


GRID_SCENARIOS = {
    "GRID_2C": GridSpec(crossing={"car1": 2, "car2": 3}, length={"car1": 4, "car2": 5}),
}


class GridIntersectionEnv:
    """Same joint API as :class:`macad_pomg.MultiAgentDrivingEnv`."""

    n_actions = 2

    def __init__(self, spec: GridSpec) -> None:
        self.spec = spec
        self.positions: Dict[str, int] = {}
        self.done: Dict[str, bool] = {}
        self.tick = 0

    @classmethod
    def from_env_id(cls, env_id: str, registry: EnvRegistry = DEFAULT_REGISTRY,
                    overrides: Optional[Mapping] = None) -> "GridIntersectionEnv":
        entry = registry.lookup(parse_env_id(env_id))
        if entry.kind != "grid" or entry.scenario not in GRID_SCENARIOS:
            raise BadSpec(f"'{env_id}' is not a grid environment", env_id=env_id)
        return cls(GRID_SCENARIOS[entry.scenario])

    @property
    def agent_ids(self) -> List[str]:
        return sorted(self.spec.crossing)

    @property
    def observation_size(self) -> int:
        return 3

    @property
    def max_steps(self) -> int:
        return self.spec.horizon

    def _observe(self, agent: str) -> np.ndarray:
        other = next(a for a in self.agent_ids if a != agent)
        return np.array([self.positions[agent], self.positions[other], float(self.done[other])], dtype=np.float64)

    def reset(self, seed: int = 0) -> Dict[str, np.ndarray]:
        self.positions = {a: 0 for a in self.agent_ids}
        self.done = {a: False for a in self.agent_ids}
        self.tick = 0
        return {a: self._observe(a) for a in self.agent_ids}

    def step(self, actions: Mapping[str, int]) -> JointStepResult:
        if self.tick >= self.spec.horizon or all(self.done.values()):
            raise EpisodeOver("grid episode finished", tick=self.tick)
        unknown = sorted(set(actions) - set(self.agent_ids))
        if unknown:
            raise UnknownAgentId(f"unknown agent ids {unknown}", agents=unknown)
        live = [a for a in self.agent_ids if not self.done[a]]
        for agent in live:
            if actions.get(agent, WAIT) not in (WAIT, ADVANCE):
                raise ActionOutOfRange(f"{agent}: action {actions[agent]!r} outside 0..1", agent=agent)

        for agent in live:
            if actions.get(agent, WAIT) == ADVANCE:
                self.positions[agent] += 1
        self.tick += 1

        crashed = len(live) == 2 and all(self.positions[a] == self.spec.crossing[a] for a in live)
        rewards, dones, info = {}, {}, {}
        for agent in live:
            reached = self.positions[agent] >= self.spec.length[agent]
            r = self.spec.step_reward
            if crashed:
                r += self.spec.collision_reward
            elif reached:
                r += self.spec.goal_reward
            rewards[agent] = r
            dones[agent] = crashed or reached or self.tick >= self.spec.horizon
            info[agent] = {
                "tick": self.tick,
                "goal_reached": reached and not crashed,
                "collisions": [{"agents": list(live), "relative_speed": 1.0, "static": False}] if crashed else [],
            }
        for agent in live:
            self.done[agent] = dones[agent]
        observations = {a: self._observe(a) for a in live}
        all_done = all(self.done.values()) or self.tick >= self.spec.horizon
        return JointStepResult(observations, rewards, dones, info, all_done)

    # ------------------------------------------------------------------
    # Explicit model
    # ------------------------------------------------------------------

    def tabular_model(self, agent: str) -> Tuple[TabularGame, List[Tuple[int, int]]]:
        """Game from *agent*'s side over states (own position, other position) plus a crash state.

        Returns the game and the state list; the crash state is last and
        labelled ``(-1, -1)``. Reaching the goal stops rewards for that agent;
        the horizon is not modelled.
        """
        if agent not in self.spec.crossing:
            raise UnknownAgentId(f"unknown agent id {agent!r}", agents=[agent])
        other = next(a for a in self.agent_ids if a != agent)
        la, lb = self.spec.length[agent], self.spec.length[other]
        ca, cb = self.spec.crossing[agent], self.spec.crossing[other]
        states = [(pa, pb) for pa in range(la + 1) for pb in range(lb + 1)]
        index = {s: i for i, s in enumerate(states)}
        crash = len(states)
        n = crash + 1
        t = np.zeros((n, 2, 2, n))
        r = np.zeros((n, 2, 2))
        terminal = np.zeros(n, dtype=bool)
        terminal[crash] = True
        for (pa, pb), s in index.items():
            if pa >= la:
                # own episode over; value stays 0
                terminal[s] = True
                continue
            for a in (WAIT, ADVANCE):
                for b in (WAIT, ADVANCE):
                    na = pa + a
                    nb = pb + b if pb < lb else pb
                    if pb < lb and na == ca and nb == cb:
                        t[s, a, b, crash] = 1.0
                        r[s, a, b] = self.spec.step_reward + self.spec.collision_reward
                        continue
                    t[s, a, b, index[(na, nb)]] = 1.0
                    r[s, a, b] = self.spec.step_reward + (self.spec.goal_reward if na >= la else 0.0)
        return TabularGame(t, r, terminal), [*states, (-1, -1)]
