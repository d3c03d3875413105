"""Per-tick driving reward.

    r = 1000 (D[t-1] - D[t]) + 0.05 (V[t] - V[t-1]) - 0.00002 (C[t] - C[t-1])
        - 2 (SW[t] - SW[t-1]) - 2 (OL[t] - OL[t-1]) + alpha + beta

D is route distance to goal in km, V speed in km/h, C cumulative collision
damage, SW / OL the sidewalk and opposing-lane footprint fractions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, Iterable, Mapping, Optional

from macad_errors import BadConfig
from macad_world import lane_infractions

if TYPE_CHECKING:  # pragma: no cover
    from macad_pomg import EnvState, WorldState

KMH_PER_MPS = 3.6

# 0.05 and 0.00002 kept as divisors so hand-substituted deltas stay exact.
_SPEED_DIVISOR = 20.0
_DAMAGE_DIVISOR = 50000.0


@dataclass(frozen=True)
class RewardSignals:
    D: float = 0.0
    V: float = 0.0
    C: float = 0.0
    SW: float = 0.0
    OL: float = 0.0

    def to_json(self) -> dict:
        return {"D": self.D, "V": self.V, "C": self.C, "SW": self.SW, "OL": self.OL}


@dataclass(frozen=True)
class ShapingContext:
    """What the alpha hook sees: every agent's previous and current signals."""

    agent: str
    prev: Mapping[str, RewardSignals] = field(default_factory=dict)
    cur: Mapping[str, RewardSignals] = field(default_factory=dict)
    env_state: Optional["EnvState"] = None


def _zero(_: Any) -> float:
    return 0.0


@dataclass(frozen=True)
class RewardShaping:
    alpha: Callable[[ShapingContext], float] = _zero
    beta: Callable[[Optional["EnvState"]], float] = _zero


DEFAULT_SHAPING = RewardShaping()


def progress_term(prev: RewardSignals, cur: RewardSignals) -> float:
    return 1000.0 * (prev.D - cur.D)


def compute_reward(
    prev: RewardSignals,
    cur: RewardSignals,
    shaping: RewardShaping = DEFAULT_SHAPING,
    context: Optional[ShapingContext] = None,
) -> float:
    r = (
        progress_term(prev, cur)
        + (cur.V - prev.V) / _SPEED_DIVISOR
        - (cur.C - prev.C) / _DAMAGE_DIVISOR
        - 2.0 * (cur.SW - prev.SW)
        - 2.0 * (cur.OL - prev.OL)
    )
    if shaping.alpha is not _zero:
        r += shaping.alpha(context if context is not None else ShapingContext(agent=""))
    if shaping.beta is not _zero:
        r += shaping.beta(context.env_state if context is not None else None)
    return r


def _mean_progress(context: ShapingContext, agents: Iterable[str]) -> float:
    agents = [a for a in agents if a in context.prev]
    if not agents:
        return 0.0
    return sum(progress_term(context.prev[a], context.cur[a]) for a in agents) / len(agents)


def coop_alpha(weight: float) -> Callable[[ShapingContext], float]:
    """alpha = weight x mean distance-progress term of the other agents."""

    def alpha(context: ShapingContext) -> float:
        if weight == 0.0:
            return 0.0
        return weight * _mean_progress(context, (a for a in context.cur if a != context.agent))

    return alpha


def comp_alpha(weight: float) -> Callable[[ShapingContext], float]:
    """alpha = -weight x mean progress of the other agents; every other agent is a rival."""

    def alpha(context: ShapingContext) -> float:
        if weight == 0.0:
            return 0.0
        return -weight * _mean_progress(context, (a for a in context.cur if a != context.agent))

    return alpha


def mixed_alpha(weight: float, teams: Mapping[str, str]) -> Callable[[ShapingContext], float]:
    """Teammates' mean progress counts for, rivals' mean progress against.

    *teams* maps agent to team name; an agent missing from it is a team of one.
    """

    def alpha(context: ShapingContext) -> float:
        if weight == 0.0:
            return 0.0
        own = teams.get(context.agent, context.agent)
        others = [a for a in context.cur if a != context.agent]
        mates = [a for a in others if teams.get(a, a) == own]
        rivals = [a for a in others if teams.get(a, a) != own]
        return weight * (_mean_progress(context, mates) - _mean_progress(context, rivals))

    return alpha


def shaping_for(reward_function: str, alpha_weight: float = 0.0,
                teams: Optional[Mapping[str, str]] = None) -> RewardShaping:
    """Reward preset by name: ``corl2017`` plus its cooperative, competitive and mixed variants."""
    if reward_function == "corl2017":
        return DEFAULT_SHAPING
    if reward_function not in _ALPHA_PRESETS:
        raise BadConfig(f"unknown reward_function '{reward_function}'", reward_function=reward_function,
                        choices=["corl2017", *sorted(_ALPHA_PRESETS)])
    if not alpha_weight:
        return DEFAULT_SHAPING
    if reward_function == "corl2017_mixed":
        return RewardShaping(alpha=mixed_alpha(alpha_weight, dict(teams or {})))
    return RewardShaping(alpha=_ALPHA_PRESETS[reward_function](alpha_weight))


_ALPHA_PRESETS = {
    "corl2017_coop": coop_alpha,
    "corl2017_comp": comp_alpha,
    "corl2017_mixed": mixed_alpha,
}


def compute_signals(world: "WorldState", agent: str) -> RewardSignals:
    state = world.actor_states[agent]
    actor = world.config.actors[agent]
    route = world.routes[agent]
    if actor.enable_planner:
        d_km = route.remaining_km(state.position)
    else:
        gx, gy = world.goals[agent]
        d_km = math.hypot(gx - state.x, gy - state.y) / 1000.0
    sw, ol = lane_infractions(world.map_model, state) if actor.lane_sensor else (0.0, 0.0)
    return RewardSignals(
        D=d_km,
        V=state.speed * KMH_PER_MPS,
        C=state.accumulated_damage,
        SW=sw,
        OL=ol,
    )
