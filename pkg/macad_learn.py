"""Learning rules and learner topologies.

Value-based: tabular or torch perceptron Q-functions with a target snapshot,
TD targets, replay and epsilon-greedy acting. Policy-based: a softmax
policy with an optional critic trained by the likelihood-ratio gradient
(REINFORCE, or n-step advantage actor-critic when a critic is given).
Game-theoretic: best-response value iteration on small explicit games.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Hashable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from macad_config import get_section
from macad_errors import BadConfig, BadSpec, EmptyBatch, EmptyTrajectory, NoConvergence, OutOfRange
from macad_logging import system_warn
from macad_nn import (
    DTYPE,
    MLP,
    OPTIMIZERS,
    VersionedModule,
    as_batch,
    load_arrays,
    make_optimizer,
    optimizer_step,
    state_arrays,
)
from macad_pomg import DIST_SCALE, EGO_FEATURES, POS_SCALE, SLOT_FEATURES


class Architecture(str, Enum):
    INDEPENDENT = "IndependentDecentralized"
    CENTRALIZED = "Centralized"
    SHARED_PARAMETERS = "SharedParameters"
    SHARED_POLICY = "SharedPolicy"


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LearnerConfig:
    gamma: float = 0.99
    horizon: Optional[int] = None
    lr: float = 6e-4
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.2
    batch_size: int = 32
    replay_capacity: int = 50000
    target_sync_interval: int = 500
    train_every: int = 1
    refresh_interval: int = 1
    hidden_width: int = 64
    n_step: int = 5
    entropy_coeff: float = 0.01
    vf_loss_coeff: float = 0.5
    grad_clip: float = 40.0
    optimizer: str = "sgd"
    architecture: Architecture = Architecture.INDEPENDENT
    n_workers: int = 1
    tabular: bool = False
    extras: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        checks = [
            (0.0 <= self.gamma < 1.0, "gamma must lie in [0, 1)"),
            (self.lr > 0, "lr must be positive"),
            (0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0, "need 0 <= epsilon_end <= epsilon_start <= 1"),
            (0.0 < self.epsilon_fraction <= 1.0, "epsilon_fraction must lie in (0, 1]"),
            (self.batch_size >= 1 and self.replay_capacity >= 1, "batch_size and replay_capacity must be >= 1"),
            (self.target_sync_interval >= 1 and self.train_every >= 1, "target_sync_interval and train_every must be >= 1"),
            (self.refresh_interval >= 1 and self.n_workers >= 1, "refresh_interval and n_workers must be >= 1"),
            (self.hidden_width >= 0 and self.n_step >= 1, "hidden_width >= 0 and n_step >= 1 required"),
            (self.horizon is None or self.horizon >= 1, "horizon must be >= 1"),
            (self.optimizer in OPTIMIZERS, f"optimizer must be one of {sorted(OPTIMIZERS)}"),
        ]
        for ok, message in checks:
            if not ok:
                raise BadConfig(message)

    @classmethod
    def from_mapping(cls, overrides: Optional[Mapping[str, Any]] = None) -> "LearnerConfig":
        """``config.json``'s ``learner`` block with *overrides* applied."""
        values: Dict[str, Any] = {**get_section("learner"), **dict(overrides or {})}
        known = {f for f in cls.__dataclass_fields__ if f != "extras"}
        extras = {k: v for k, v in values.items() if k not in known}
        if extras:
            system_warn(f"learner config keys ignored: {', '.join(sorted(extras))}")
        kwargs = {k: v for k, v in values.items() if k in known}
        try:
            if "architecture" in kwargs:
                kwargs["architecture"] = Architecture(kwargs["architecture"])
            return cls(**kwargs, extras=extras)
        except (TypeError, ValueError) as exc:
            raise BadConfig(f"bad learner config: {exc}") from exc

    def epsilon(self, progress: float) -> float:
        """Linear decay from ``epsilon_start`` to ``epsilon_end`` over the first ``epsilon_fraction`` of training."""
        frac = min(max(progress, 0.0) / self.epsilon_fraction, 1.0)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def to_json(self) -> Dict[str, Any]:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "extras"}
        out["architecture"] = self.architecture.value
        return {**out, **dict(self.extras)}


# ---------------------------------------------------------------------------
# Experience
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Transition:
    agent: str
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    done: bool

    def __post_init__(self) -> None:
        if not math.isfinite(self.reward):
            raise OutOfRange(f"non-finite reward {self.reward} for {self.agent}", agent=self.agent)


class ReplayBuffer:
    """FIFO ring of transitions with uniform sampling without replacement."""

    def __init__(self, capacity: int, shared: bool = False) -> None:
        if capacity < 1:
            raise BadConfig("replay capacity must be >= 1")
        self.capacity = capacity
        self.shared = shared
        self._items: deque = deque(maxlen=capacity)

    def push(self, transition: Transition) -> None:
        self._items.append(transition)

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[Transition]:
        if not self._items:
            raise EmptyBatch("replay buffer is empty")
        idx = rng.choice(len(self._items), size=min(batch_size, len(self._items)), replace=False)
        return [self._items[i] for i in idx]

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(list(self._items))


class ParameterVector:
    """Flat parameters plus a version that goes up on every assignment."""

    def __init__(self, values: np.ndarray) -> None:
        self._values = np.array(values, dtype=np.float64)
        self.version = 0

    @property
    def values(self) -> np.ndarray:
        return self._values

    def assign(self, values: np.ndarray) -> None:
        self._values = np.array(values, dtype=np.float64)
        self.version += 1

    def snapshot(self) -> np.ndarray:
        snap = self._values.copy()
        snap.flags.writeable = False
        return snap

    def __len__(self) -> int:
        return self._values.shape[0]


# ---------------------------------------------------------------------------
# Observation keys for tabular learners
# ---------------------------------------------------------------------------

Discretizer = Callable[[np.ndarray], Tuple[int, ...]]


@dataclass(frozen=True)
class RoundingDiscretizer:
    """Key = observation rounded to ``1 / scale``."""

    scale: float = 1000.0
    name: str = "rounding"

    def __call__(self, obs: np.ndarray) -> Tuple[int, ...]:
        return tuple(int(v) for v in np.rint(np.asarray(obs) * self.scale))


@dataclass(frozen=True)
class DrivingDiscretizer:
    """(ego cell, nearest visible actor relative cell, speed bucket)."""

    max_slots: int = 8
    cell: float = 5.0
    speed_bucket: float = 2.0
    max_speed: float = 20.0
    name: str = "driving"

    def __call__(self, obs: np.ndarray) -> Tuple[int, ...]:
        ego_x = int(math.floor(obs[0] * POS_SCALE / self.cell))
        ego_y = int(math.floor(obs[1] * POS_SCALE / self.cell))
        speed = int(math.floor(obs[4] * self.max_speed / self.speed_bucket))
        nearest = (99, 99)
        best = math.inf
        for slot in range(self.max_slots):
            base = EGO_FEATURES + slot * SLOT_FEATURES
            if obs[base] < 0.5:
                continue
            dx, dy = obs[base + 1] * DIST_SCALE, obs[base + 2] * DIST_SCALE
            if math.hypot(dx, dy) < best:
                best = math.hypot(dx, dy)
                nearest = (int(math.floor(dx / self.cell)), int(math.floor(dy / self.cell)))
        return (ego_x, ego_y, *nearest, speed)


DISCRETIZERS: Dict[str, Callable[..., Discretizer]] = {
    "rounding": RoundingDiscretizer,
    "driving": DrivingDiscretizer,
}


# ---------------------------------------------------------------------------
# Q-functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QView:
    """Read-only Q-function snapshot used by actors."""

    version: int
    q_values: Callable[[np.ndarray], np.ndarray]


class TabularQ:
    kind = "tabular"

    def __init__(self, n_actions: int, discretizer: Discretizer) -> None:
        self.n_actions = n_actions
        self.discretizer = discretizer
        self.index: Dict[Hashable, int] = {}
        self.theta = ParameterVector(np.zeros(0))
        self._target_index: Dict[Hashable, int] = {}
        self._target = np.zeros((0, n_actions))
        self.shared_block = None

    @property
    def table(self) -> np.ndarray:
        return self.theta.values.reshape(-1, self.n_actions)

    def key(self, obs: np.ndarray) -> Hashable:
        return self.discretizer(obs)

    def q_values(self, obs: np.ndarray) -> np.ndarray:
        row = self.index.get(self.key(obs))
        return self.table[row].copy() if row is not None else np.zeros(self.n_actions)

    def target_values(self, obs: np.ndarray) -> np.ndarray:
        row = self._target_index.get(self.key(obs))
        return self._target[row].copy() if row is not None else np.zeros(self.n_actions)

    def sync_target(self) -> None:
        self._target_index = dict(self.index)
        self._target = self.table.copy()

    def snapshot(self) -> QView:
        index = dict(self.index)
        table = self.theta.snapshot().reshape(-1, self.n_actions)
        key, n = self.key, self.n_actions

        def q_values(obs: np.ndarray) -> np.ndarray:
            row = index.get(key(obs))
            return table[row].copy() if row is not None else np.zeros(n)

        return QView(self.theta.version, q_values)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {"table": self.table.copy()}

    def load_state(self, arrays: Mapping[str, np.ndarray], keys: Sequence[Sequence[int]]) -> None:
        self.index = {tuple(k): i for i, k in enumerate(keys)}
        self.theta.assign(np.asarray(arrays["table"]).ravel())
        self.sync_target()


class MLPQ:
    kind = "mlp"

    def __init__(self, n_inputs: int, n_actions: int, hidden: int, rng: np.random.Generator,
                 optimizer: str = "sgd") -> None:
        self.n_actions = n_actions
        self.net = MLP(n_inputs, n_actions, hidden, rng)
        self.theta = VersionedModule(self.net)
        self.optimizer = make_optimizer(optimizer, self.net.parameters())
        self.target_net = self.theta.frozen()

    @property
    def shared_block(self) -> slice:
        return self.net.shared_block

    def q_values(self, obs: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            return self.net(as_batch(obs))[0].numpy()

    def target_values(self, obs: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            return self.target_net(as_batch(obs))[0].numpy()

    def sync_target(self) -> None:
        self.target_net = self.theta.frozen()

    def snapshot(self) -> QView:
        net = self.theta.frozen()

        def q_values(obs: np.ndarray) -> np.ndarray:
            with torch.no_grad():
                return net(as_batch(obs))[0].numpy()

        return QView(self.theta.version, q_values)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return state_arrays(self.net)

    def load_state(self, arrays: Mapping[str, np.ndarray], keys: Sequence[Sequence[int]] = ()) -> None:
        load_arrays(self.net, dict(arrays))
        self.theta.bump()
        self.sync_target()


QFunction = Union[TabularQ, MLPQ]


def td_target(q: QFunction, t: Transition, gamma: float) -> float:
    """r if terminal, else r + gamma * max_a' Q(o', a'; theta-)."""
    if t.done:
        return float(t.reward)
    return float(t.reward + gamma * np.max(q.target_values(t.next_obs)))


def _q_terms(q: MLPQ, batch: Sequence[Transition], gamma: float):
    obs = as_batch(np.stack([t.obs for t in batch]))
    actions = torch.as_tensor([t.action for t in batch], dtype=torch.long)
    targets = torch.as_tensor([td_target(q, t, gamma) for t in batch], dtype=DTYPE)
    return obs, actions, targets


def _squared_td(outputs: torch.Tensor, actions: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    chosen = outputs.gather(1, actions[:, None])[:, 0]
    return 0.5 * F.mse_loss(chosen, targets)


def q_loss(q: MLPQ, batch: Sequence[Transition], gamma: float, params: Optional[np.ndarray] = None) -> float:
    """0.5 * mean (y - Q(o, a))^2 with y fixed by the target snapshot."""
    obs, actions, targets = _q_terms(q, batch, gamma)
    with torch.no_grad():
        outputs = q.net(obs) if params is None else q.net.call_with(params, obs)
        return float(_squared_td(outputs, actions, targets))


def q_loss_gradient(q: MLPQ, batch: Sequence[Transition], gamma: float, params: Optional[np.ndarray] = None) -> np.ndarray:
    """Autograd gradient of :func:`q_loss` with respect to the flat parameters."""
    obs, actions, targets = _q_terms(q, batch, gamma)
    vector = torch.tensor(q.theta.values if params is None else params, dtype=DTYPE, requires_grad=True)
    (grad,) = torch.autograd.grad(_squared_td(q.net.call_with(vector, obs), actions, targets), vector)
    return grad.numpy()


def q_update(q: QFunction, batch: Sequence[Transition], gamma: float, lr: float, grad_clip: float = 0.0) -> QFunction:
    """One step on the mean squared TD error; returns *q* with ``theta.version`` incremented."""
    if not batch:
        raise EmptyBatch("q_update needs at least one transition")
    if isinstance(q, TabularQ):
        targets = [td_target(q, t, gamma) for t in batch]
        table = q.table.copy()
        rows = []
        for t in batch:
            key = q.key(t.obs)
            if key not in q.index:
                q.index[key] = table.shape[0]
                table = np.vstack([table, np.zeros((1, q.n_actions))])
            rows.append(q.index[key])
        delta = np.zeros_like(table)
        for row, t, y in zip(rows, batch, targets):
            delta[row, t.action] += y - table[row, t.action]
        q.theta.assign((table + lr * delta / len(batch)).ravel())
        return q
    obs, actions, targets = _q_terms(q, batch, gamma)
    q.optimizer.zero_grad()
    _squared_td(q.net(obs), actions, targets).backward()
    optimizer_step(q.optimizer, q.net, lr, grad_clip)
    q.theta.bump()
    return q


def act_epsilon_greedy(q: Any, obs: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform action with probability epsilon, else argmax Q (lowest index on ties).

    One uniform draw per call; a second only when exploring.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise OutOfRange(f"epsilon {epsilon} outside [0, 1]", epsilon=epsilon)
    values = np.asarray(q.q_values(obs)).reshape(-1)
    if rng.random() < epsilon:
        return int(rng.integers(values.shape[0]))
    return int(np.argmax(values))


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolicyView:
    version: int
    probs: Callable[[np.ndarray], np.ndarray]

    def sample(self, obs: np.ndarray, rng: np.random.Generator) -> int:
        return sample_action(self.probs(obs), rng)

    def q_values(self, obs: np.ndarray) -> np.ndarray:
        # greedy acting reads the distribution like a value vector
        return self.probs(obs)


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    u = rng.random()
    return min(int(np.searchsorted(np.cumsum(probs), u, side="right")), probs.shape[0] - 1)


class SoftmaxPolicy:
    kind = "policy"

    def __init__(self, n_inputs: int, n_actions: int, hidden: int, rng: np.random.Generator,
                 optimizer: str = "sgd") -> None:
        self.n_actions = n_actions
        self.net = MLP(n_inputs, n_actions, hidden, rng, output_scale=0.01)
        self.theta = VersionedModule(self.net)
        self.optimizer = make_optimizer(optimizer, self.net.parameters())

    @property
    def shared_block(self) -> slice:
        return self.net.shared_block

    def log_probs(self, obs: np.ndarray, params: Optional[np.ndarray] = None) -> np.ndarray:
        x = as_batch(obs)
        with torch.no_grad():
            logits = self.net(x) if params is None else self.net.call_with(params, x)
            return F.log_softmax(logits, dim=-1).numpy()

    def probs(self, obs: np.ndarray, params: Optional[np.ndarray] = None) -> np.ndarray:
        p = np.exp(self.log_probs(obs, params))
        return p[0] if np.ndim(obs) == 1 else p

    def sample(self, obs: np.ndarray, rng: np.random.Generator) -> int:
        return sample_action(self.probs(obs), rng)

    def snapshot(self) -> PolicyView:
        net = self.theta.frozen()

        def probs(obs: np.ndarray) -> np.ndarray:
            with torch.no_grad():
                return F.softmax(net(as_batch(obs)), dim=-1)[0].numpy()

        return PolicyView(self.theta.version, probs)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return state_arrays(self.net)

    def load_state(self, arrays: Mapping[str, np.ndarray], keys: Sequence[Sequence[int]] = ()) -> None:
        load_arrays(self.net, dict(arrays))
        self.theta.bump()


class ValueFunction:
    def __init__(self, n_inputs: int, hidden: int, rng: np.random.Generator, optimizer: str = "sgd") -> None:
        self.net = MLP(n_inputs, 1, hidden, rng)
        self.theta = VersionedModule(self.net)
        self.optimizer = make_optimizer(optimizer, self.net.parameters())

    def values(self, obs: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            return self.net(as_batch(obs))[:, 0].numpy()


class ActorCritic:
    """Policy plus critic, updated together by :func:`pg_update`."""

    kind = "actor_critic"

    def __init__(self, n_inputs: int, n_actions: int, hidden: int, rng: np.random.Generator,
                 optimizer: str = "sgd") -> None:
        self.policy = SoftmaxPolicy(n_inputs, n_actions, hidden, rng, optimizer)
        self.critic = ValueFunction(n_inputs, hidden, rng, optimizer)
        self.n_actions = n_actions

    @property
    def theta(self) -> VersionedModule:
        return self.policy.theta

    @property
    def shared_block(self) -> slice:
        return self.policy.shared_block

    def snapshot(self) -> PolicyView:
        return self.policy.snapshot()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {**state_arrays(self.policy.net, "policy."), **state_arrays(self.critic.net, "critic.")}

    def load_state(self, arrays: Mapping[str, np.ndarray], keys: Sequence[Sequence[int]] = ()) -> None:
        load_arrays(self.policy.net, dict(arrays), "policy.")
        load_arrays(self.critic.net, dict(arrays), "critic.")
        self.policy.theta.bump()
        self.critic.theta.bump()


def discounted_returns(rewards: Sequence[float], gamma: float, bootstrap: float = 0.0) -> np.ndarray:
    out = np.zeros(len(rewards))
    running = bootstrap
    for i in range(len(rewards) - 1, -1, -1):
        running = rewards[i] + gamma * running
        out[i] = running
    return out


def n_step_returns(traj: Sequence[Transition], gamma: float, n: int, values_next: np.ndarray) -> np.ndarray:
    """Truncated n-step returns bootstrapped from V(o'_{t+n-1}) unless the episode ended first."""
    out = np.zeros(len(traj))
    for t in range(len(traj)):
        g, discount = 0.0, 1.0
        end = min(t + n, len(traj))
        for k in range(t, end):
            g += discount * traj[k].reward
            discount *= gamma
            if traj[k].done:
                break
        else:
            g += discount * values_next[end - 1]
        out[t] = g
    return out


def _pg_terms(trajectories: Sequence[Sequence[Transition]], gamma: float,
              critic: Optional[ValueFunction], n_step: Optional[int]):
    steps = [t for traj in trajectories for t in traj]
    if not steps:
        raise EmptyTrajectory("pg_update needs at least one transition")
    obs = np.stack([t.obs for t in steps])
    actions = np.array([t.action for t in steps])
    returns = []
    for traj in trajectories:
        if not traj:
            continue
        if critic is None:
            returns.append(discounted_returns([t.reward for t in traj], gamma))
            continue
        next_values = critic.values(np.stack([t.next_obs for t in traj]))
        if n_step is None:
            last = traj[-1]
            returns.append(discounted_returns([t.reward for t in traj], gamma, 0.0 if last.done else float(next_values[-1])))
        else:
            returns.append(n_step_returns(traj, gamma, n_step, next_values))
    returns_arr = np.concatenate(returns)
    baseline = critic.values(obs) if critic is not None else np.zeros(len(steps))
    return obs, actions, returns_arr, returns_arr - baseline


def _pg_objective(logits: torch.Tensor, actions: np.ndarray, advantages: np.ndarray,
                  entropy_coeff: float) -> torch.Tensor:
    logp = F.log_softmax(logits, dim=-1)
    chosen = logp.gather(1, torch.as_tensor(actions, dtype=torch.long)[:, None])[:, 0]
    objective = (chosen * torch.as_tensor(advantages, dtype=DTYPE)).mean()
    if entropy_coeff:
        entropy = -(logp.exp() * logp).sum(dim=1)
        objective = objective + entropy_coeff * entropy.mean()
    return objective


def pg_objective(policy: SoftmaxPolicy, trajectories: Sequence[Sequence[Transition]], gamma: float,
                 params: Optional[np.ndarray] = None, entropy_coeff: float = 0.0) -> float:
    """mean_t log pi(a_t | o_t) * G_t + entropy_coeff * mean_t H(pi(. | o_t))."""
    obs, actions, _, advantages = _pg_terms(trajectories, gamma, None, None)
    x = as_batch(obs)
    with torch.no_grad():
        logits = policy.net(x) if params is None else policy.net.call_with(params, x)
        return float(_pg_objective(logits, actions, advantages, entropy_coeff))


def pg_gradient(policy: SoftmaxPolicy, trajectories: Sequence[Sequence[Transition]], gamma: float,
                params: Optional[np.ndarray] = None, entropy_coeff: float = 0.0) -> np.ndarray:
    """Autograd gradient of :func:`pg_objective` with respect to the flat parameters."""
    obs, actions, _, advantages = _pg_terms(trajectories, gamma, None, None)
    vector = torch.tensor(policy.theta.values if params is None else params, dtype=DTYPE, requires_grad=True)
    objective = _pg_objective(policy.net.call_with(vector, as_batch(obs)), actions, advantages, entropy_coeff)
    (grad,) = torch.autograd.grad(objective, vector)
    return grad.numpy()


def pg_update(
    model: Union[SoftmaxPolicy, ActorCritic],
    trajectories: Sequence[Sequence[Transition]],
    gamma: float,
    lr: float,
    *,
    n_step: Optional[int] = None,
    entropy_coeff: float = 0.0,
    vf_loss_coeff: float = 0.5,
    grad_clip: float = 0.0,
) -> Dict[str, float]:
    """One ascent step on the likelihood-ratio gradient.

    A bare :class:`SoftmaxPolicy` uses discounted returns (REINFORCE); an
    :class:`ActorCritic` subtracts its critic as a baseline, bootstraps
    unfinished trajectories (n-step when *n_step* is set) and takes one
    descent step on the critic's squared error.
    """
    policy = model.policy if isinstance(model, ActorCritic) else model
    critic = model.critic if isinstance(model, ActorCritic) else None
    obs, actions, returns, advantages = _pg_terms(trajectories, gamma, critic, n_step)
    x = as_batch(obs)

    policy.optimizer.zero_grad()
    (-_pg_objective(policy.net(x), actions, advantages, entropy_coeff)).backward()
    norm = optimizer_step(policy.optimizer, policy.net, lr, grad_clip)
    policy.theta.bump()
    stats = {"mean_return": float(np.mean(returns)), "policy_grad_norm": norm}
    if critic is not None:
        critic.optimizer.zero_grad()
        value_loss = 0.5 * F.mse_loss(critic.net(x)[:, 0], torch.as_tensor(returns, dtype=DTYPE))
        (vf_loss_coeff * value_loss).backward()
        optimizer_step(critic.optimizer, critic.net, lr, grad_clip)
        critic.theta.bump()
        stats["value_loss"] = float(value_loss)
    return stats


# ---------------------------------------------------------------------------
# Best response on explicit games
# ---------------------------------------------------------------------------

MAX_JOINT_ENTRIES = 10_000


@dataclass(frozen=True)
class TabularGame:
    """Explicit model from agent i's point of view.

    ``transitions[s, a, b, s']`` and ``rewards[s, a, b]`` for own action ``a``
    and opponent action ``b``; terminal states are absorbing with value 0.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    terminal: np.ndarray

    def __post_init__(self) -> None:
        s, a, b, s2 = self.transitions.shape
        if s != s2 or self.rewards.shape != (s, a, b) or self.terminal.shape != (s,):
            raise BadSpec("game arrays disagree on shape",
                          transitions=list(self.transitions.shape), rewards=list(self.rewards.shape))
        if s * a * b > MAX_JOINT_ENTRIES:
            raise BadSpec(f"{s * a * b} joint entries exceed {MAX_JOINT_ENTRIES}")
        sums = self.transitions.sum(axis=3)[~self.terminal]
        if not np.allclose(sums, 1.0):
            raise BadSpec("transition rows must sum to 1")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def n_opponent_actions(self) -> int:
        return self.transitions.shape[2]

    @classmethod
    def single_agent(cls, transitions: np.ndarray, rewards: np.ndarray, terminal: Optional[np.ndarray] = None) -> "TabularGame":
        t = np.asarray(transitions, dtype=np.float64)[:, :, None, :]
        r = np.asarray(rewards, dtype=np.float64)[:, :, None]
        term = np.zeros(t.shape[0], dtype=bool) if terminal is None else np.asarray(terminal, dtype=bool)
        return cls(t, r, term)

    @classmethod
    def from_payoffs(cls, payoffs: np.ndarray) -> "TabularGame":
        """One-shot matrix game: a decision state followed by an absorbing state."""
        payoffs = np.asarray(payoffs, dtype=np.float64)
        a, b = payoffs.shape
        t = np.zeros((2, a, b, 2))
        t[:, :, :, 1] = 1.0
        r = np.zeros((2, a, b))
        r[0] = payoffs
        return cls(t, r, np.array([False, True]))


@dataclass(frozen=True)
class BestResponse:
    values: np.ndarray
    q: np.ndarray
    policy: np.ndarray  # (S, A) one-hot
    iterations: int

    @property
    def actions(self) -> np.ndarray:
        return np.argmax(self.policy, axis=1)


def best_response_value_iteration(
    game: TabularGame,
    opponent_policy: np.ndarray,
    gamma: float,
    tol: float = 1e-10,
    max_iterations: int = 100_000,
) -> BestResponse:
    """Value iteration against a fixed opponent policy, then the greedy best response."""
    if not 0.0 <= gamma < 1.0:
        raise BadConfig("gamma must lie in [0, 1)")
    opp = np.asarray(opponent_policy, dtype=np.float64)
    if opp.ndim == 1:
        opp = np.broadcast_to(opp, (game.n_states, game.n_opponent_actions))
    if opp.shape != (game.n_states, game.n_opponent_actions):
        raise BadSpec("opponent policy shape does not match the game", shape=list(opp.shape))

    # marginalise the opponent: P[s, a, s'], R[s, a]
    p = np.einsum("sb,sabt->sat", opp, game.transitions)
    r = np.einsum("sb,sab->sa", opp, game.rewards)
    live = ~game.terminal
    values = np.zeros(game.n_states)
    for iteration in range(1, max_iterations + 1):
        q = r + gamma * p @ values
        new = np.where(live, q.max(axis=1), 0.0)
        delta = float(np.max(np.abs(new - values)))
        values = new
        if delta < tol:
            break
    else:
        raise NoConvergence(f"value iteration did not reach tol {tol} in {max_iterations} sweeps", tol=tol)
    q = np.where(live[:, None], r + gamma * p @ values, 0.0)
    policy = np.zeros_like(q)
    policy[np.arange(game.n_states), np.argmax(q, axis=1)] = 1.0
    return BestResponse(values, q, policy, iteration)




# ---------------------------------------------------------------------------
# Topologies
# ---------------------------------------------------------------------------

@dataclass
class LearnerTopology:
    architecture: Architecture
    agents: List[str]
    models: Dict[str, Any]
    model_of: Dict[str, str]
    learner_of: Dict[str, str]
    buffers: Dict[str, ReplayBuffer]
    buffer_of: Dict[str, str]
    team_reward: bool = False
    shared_block: bool = False

    def model(self, agent: str) -> Any:
        return self.models[self.model_of[agent]]

    def buffer(self, agent: str) -> ReplayBuffer:
        return self.buffers[self.buffer_of[agent]]

    @property
    def n_learners(self) -> int:
        return len(set(self.learner_of.values()))

    def agents_of(self, key: str) -> List[str]:
        return [a for a in self.agents if self.model_of[a] == key]

    def sync_shared(self, source: str) -> None:
        """Copy the shared block of model *source* into every other model."""
        if not self.shared_block:
            return
        src = self.models[source]
        block = src.shared_block
        for key, model in self.models.items():
            if key == source:
                continue
            values = model.theta.values.copy()
            values[block] = src.theta.values[block]
            model.theta.assign(values)


ModelFactory = Callable[[str, int], Any]


def _single_learner(arch: Architecture, ids: List[str], key: str, capacity: int,
                    model_factory: ModelFactory) -> LearnerTopology:
    return LearnerTopology(
        arch, ids,
        models={key: model_factory(key, 0)},
        model_of={a: key for a in ids},
        learner_of={a: key for a in ids},
        buffers={key: ReplayBuffer(capacity, shared=True)},
        buffer_of={a: key for a in ids},
        team_reward=arch == Architecture.CENTRALIZED,
    )


def configure_architecture(
    config: LearnerConfig,
    agents: Union[int, Sequence[str]],
    model_factory: ModelFactory,
) -> LearnerTopology:
    """Wire models, learners and replay buffers for one of the four architectures.

    *model_factory* is called once per parameter block with the block key and
    the block's ordinal. Centralized and SharedPolicy both train one model on
    every agent's transitions; Centralized optimises the team reward, while
    SharedPolicy keeps each agent's own reward.
    """
    ids = [f"agent_{i}" for i in range(agents)] if isinstance(agents, int) else list(agents)
    if not ids:
        raise BadConfig("need at least one agent")
    arch = config.architecture
    capacity = config.replay_capacity

    if arch == Architecture.CENTRALIZED:
        return _single_learner(arch, ids, "central", capacity, model_factory)
    if arch == Architecture.SHARED_POLICY:
        return _single_learner(arch, ids, "shared", capacity, model_factory)

    models = {a: model_factory(a, i) for i, a in enumerate(ids)}
    topology = LearnerTopology(
        arch, ids,
        models=models,
        model_of={a: a for a in ids},
        learner_of={a: a for a in ids},
        buffers={a: ReplayBuffer(capacity) for a in ids},
        buffer_of={a: a for a in ids},
        shared_block=arch == Architecture.SHARED_PARAMETERS,
    )
    if topology.shared_block:
        first = models[ids[0]]
        block = getattr(first, "shared_block", None)
        if block is None or block.stop == block.start:
            raise BadConfig("SharedParameters needs a model with a hidden layer to share", architecture=arch.value)
        topology.sync_shared(ids[0])
    return topology
