import itertools

import numpy as np
import pytest
import torch

from macad_errors import BadConfig, BadSpec, EmptyBatch, EmptyTrajectory, NoConvergence, OutOfRange
from macad_learn import (
    ActorCritic,
    Architecture,
    DrivingDiscretizer,
    LearnerConfig,
    MLPQ,
    ParameterVector,
    ReplayBuffer,
    RoundingDiscretizer,
    SoftmaxPolicy,
    TabularGame,
    TabularQ,
    Transition,
    act_epsilon_greedy,
    best_response_value_iteration,
    configure_architecture,
    discounted_returns,
    n_step_returns,
    pg_gradient,
    pg_objective,
    pg_update,
    q_loss,
    q_loss_gradient,
    q_update,
    td_target,
)


class FixedQ:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    def q_values(self, obs):
        return self.values

    def target_values(self, obs):
        return self.values


def transition(obs, action, reward, next_obs=None, done=False, agent="a"):
    obs = np.atleast_1d(np.asarray(obs, dtype=np.float64))
    next_obs = obs if next_obs is None else np.atleast_1d(np.asarray(next_obs, dtype=np.float64))
    return Transition(agent, obs, action, reward, next_obs, done)


def numeric_gradient(f, params, eps=1e-6):
    grad = np.zeros_like(params)
    for i in range(params.shape[0]):
        step = np.zeros_like(params)
        step[i] = eps
        grad[i] = (f(params + step) - f(params - step)) / (2 * eps)
    return grad


# ---------------------------------------------------------------------------
# Value-based learning
# ---------------------------------------------------------------------------

def test_td_target():
    q = FixedQ([1.0, 2.0, 4.0])
    assert td_target(q, transition([0.0], 0, 5.0), gamma=1.0) == 9.0
    assert td_target(q, transition([0.0], 0, 5.0, done=True), gamma=1.0) == 5.0


def test_tabular_update_with_unit_step_reaches_target():
    q = TabularQ(3, RoundingDiscretizer())
    q_update(q, [transition([0.1], 2, 1.5, done=True)], gamma=0.9, lr=1.0)
    np.testing.assert_array_equal(q.q_values(np.array([0.1])), [0.0, 0.0, 1.5])
    np.testing.assert_array_equal(q.q_values(np.array([0.2])), [0.0, 0.0, 0.0])
    assert q.theta.version == 1


def test_tabular_update_uses_target_snapshot():
    q = TabularQ(2, RoundingDiscretizer())
    q_update(q, [transition([1.0], 0, 2.0, done=True)], gamma=0.5, lr=1.0)
    step = transition([0.0], 1, 0.0, next_obs=[1.0])
    q_update(q, [step], gamma=0.5, lr=1.0)
    assert q.q_values(np.array([0.0]))[1] == 0.0
    q.sync_target()
    q_update(q, [step], gamma=0.5, lr=1.0)
    assert q.q_values(np.array([0.0]))[1] == 1.0


def test_repeated_transition_batch_matches_single():
    single, batched = TabularQ(2, RoundingDiscretizer()), TabularQ(2, RoundingDiscretizer())
    t = transition([0.3], 1, 1.5, done=True)
    q_update(single, [t], gamma=0.9, lr=0.5)
    q_update(batched, [t] * 4, gamma=0.9, lr=0.5)
    np.testing.assert_allclose(single.table, batched.table)
    assert single.q_values(np.array([0.3]))[1] == pytest.approx(0.75)


def test_empty_batch():
    with pytest.raises(EmptyBatch):
        q_update(TabularQ(2, RoundingDiscretizer()), [], gamma=0.9, lr=0.1)


@pytest.fixture
def mlp_batch(rng):
    q = MLPQ(4, 3, 5, rng)
    batch = [
        transition(rng.normal(size=4), int(rng.integers(3)), float(rng.normal()), rng.normal(size=4), done=bool(i % 3 == 0))
        for i in range(8)
    ]
    return q, batch


def test_q_loss_gradient_matches_finite_differences(mlp_batch):
    q, batch = mlp_batch
    analytic = q_loss_gradient(q, batch, 0.9)
    numeric = numeric_gradient(lambda p: q_loss(q, batch, 0.9, p), q.theta.values.copy())
    np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-8)


def test_q_update_lowers_loss(mlp_batch):
    q, batch = mlp_batch
    before = q_loss(q, batch, 0.9)
    q_update(q, batch, 0.9, lr=0.01)
    assert q_loss(q, batch, 0.9) < before
    assert q.theta.version == 1


def test_snapshot_does_not_follow_updates(mlp_batch, rng):
    q, batch = mlp_batch
    view = q.snapshot()
    obs = rng.normal(size=4)
    before = view.q_values(obs).copy()
    q_update(q, batch, 0.9, lr=0.1)
    np.testing.assert_array_equal(view.q_values(obs), before)
    assert not np.array_equal(q.q_values(obs), before)


def test_adam_optimizer(rng):
    q = MLPQ(4, 3, 5, rng, optimizer="adam")
    assert isinstance(q.optimizer, torch.optim.Adam)
    before = q.theta.values
    q_update(q, [transition(rng.normal(size=4), 1, 1.0, done=True)], 0.9, lr=1e-3)
    assert not np.array_equal(q.theta.values, before)


def test_epsilon_greedy(rng):
    assert act_epsilon_greedy(FixedQ([1.0, 3.0, 2.0]), np.zeros(1), 0.0, rng) == 1
    assert act_epsilon_greedy(FixedQ([2.0, 2.0, 1.0]), np.zeros(1), 0.0, rng) == 0
    counts = np.bincount([act_epsilon_greedy(FixedQ([0.0, 5.0, 0.0]), np.zeros(1), 1.0, rng) for _ in range(9000)],
                         minlength=3)
    np.testing.assert_allclose(counts / 9000, [1 / 3] * 3, atol=0.03)


@pytest.mark.parametrize("epsilon", [-0.1, 1.1])
def test_epsilon_out_of_range(rng, epsilon):
    with pytest.raises(OutOfRange):
        act_epsilon_greedy(FixedQ([0.0]), np.zeros(1), epsilon, rng)


def test_replay_buffer_is_fifo(rng):
    buffer = ReplayBuffer(3)
    for i in range(5):
        buffer.push(transition([float(i)], 0, float(i)))
    assert len(buffer) == 3
    assert [t.reward for t in buffer] == [2.0, 3.0, 4.0]
    sample = buffer.sample(10, rng)
    assert sorted(t.reward for t in sample) == [2.0, 3.0, 4.0]


def test_replay_buffer_errors(rng):
    with pytest.raises(EmptyBatch):
        ReplayBuffer(2).sample(1, rng)
    with pytest.raises(BadConfig):
        ReplayBuffer(0)


@pytest.mark.parametrize("reward", [float("nan"), float("inf")])
def test_non_finite_reward_rejected(reward):
    with pytest.raises(OutOfRange):
        transition([0.0], 0, reward)


def test_parameter_vector_versions():
    theta = ParameterVector(np.zeros(3))
    snap = theta.snapshot()
    theta.assign(np.ones(3))
    assert theta.version == 1
    np.testing.assert_array_equal(snap, np.zeros(3))
    with pytest.raises(ValueError):
        snap[0] = 1.0


def test_driving_discretizer_without_neighbours():
    assert DrivingDiscretizer()(np.zeros(67)) == (0, 0, 99, 99, 0)


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "kwargs",
    [{"gamma": 1.0}, {"lr": 0.0}, {"epsilon_end": 0.5, "epsilon_start": 0.1}, {"batch_size": 0}, {"n_step": 0},
     {"optimizer": "lbfgs"}],
)
def test_learner_config_validation(kwargs):
    with pytest.raises(BadConfig):
        LearnerConfig(**kwargs)


def test_learner_config_from_mapping():
    config = LearnerConfig.from_mapping({"lr": 0.5, "architecture": "SharedPolicy", "mystery": 3})
    assert config.lr == 0.5
    assert config.architecture is Architecture.SHARED_POLICY
    assert config.extras == {"mystery": 3}
    assert config.to_json()["architecture"] == "SharedPolicy"
    with pytest.raises(BadConfig):
        LearnerConfig.from_mapping({"architecture": "Federated"})


def test_epsilon_schedule():
    config = LearnerConfig(epsilon_start=1.0, epsilon_end=0.05, epsilon_fraction=0.2)
    assert config.epsilon(0.0) == 1.0
    assert config.epsilon(0.1) == pytest.approx(0.525)
    assert config.epsilon(0.2) == pytest.approx(0.05)
    assert config.epsilon(0.9) == pytest.approx(0.05)


# ---------------------------------------------------------------------------
# Best response
# ---------------------------------------------------------------------------

def chain_game(n=5):
    """Walk left (0) or right (1); entering the last state pays 1 and ends."""
    t = np.zeros((n, 2, n))
    r = np.zeros((n, 2))
    for s in range(n - 1):
        t[s, 0, max(s - 1, 0)] = 1.0
        t[s, 1, s + 1] = 1.0
    r[n - 2, 1] = 1.0
    terminal = np.zeros(n, dtype=bool)
    terminal[-1] = True
    return t, r, terminal


def brute_force_values(t, r, terminal, gamma):
    live = np.flatnonzero(~terminal)
    best = np.full(len(live), -np.inf)
    for policy in itertools.product(range(t.shape[1]), repeat=len(live)):
        p = np.array([t[s, a][live] for s, a in zip(live, policy)])
        rewards = np.array([r[s, a] for s, a in zip(live, policy)])
        values = np.linalg.solve(np.eye(len(live)) - gamma * p, rewards)
        best = np.maximum(best, values)
    return best


def test_chain_best_response_matches_brute_force():
    t, r, terminal = chain_game()
    response = best_response_value_iteration(TabularGame.single_agent(t, r, terminal), np.array([1.0]), gamma=0.9)
    np.testing.assert_allclose(response.values[:-1], brute_force_values(t, r, terminal, 0.9), atol=1e-8)
    np.testing.assert_allclose(response.values[:-1], [0.9 ** 3, 0.9 ** 2, 0.9, 1.0], atol=1e-8)
    assert list(response.actions[:-1]) == [1, 1, 1, 1]
    assert response.values[-1] == 0.0


def test_myopic_best_response():
    t, r, terminal = chain_game()
    response = best_response_value_iteration(TabularGame.single_agent(t, r, terminal), np.array([1.0]), gamma=0.0)
    np.testing.assert_array_equal(response.values, [0.0, 0.0, 0.0, 1.0, 0.0])
    assert list(response.actions[:-1]) == [0, 0, 0, 1]


@pytest.mark.parametrize(
    "payoffs, opponent, action, value",
    [
        ([[3.0, 0.0], [5.0, 1.0]], [1.0, 0.0], 1, 5.0),  # prisoner's dilemma vs cooperate
        ([[1.0, -1.0], [-1.0, 1.0]], [0.3, 0.7], 1, 0.4),  # matching pennies
        ([[2.0, 0.0], [0.0, 1.0]], [0.5, 0.5], 0, 1.0),  # coordination
    ],
)
def test_matrix_game_best_responses(payoffs, opponent, action, value):
    response = best_response_value_iteration(TabularGame.from_payoffs(np.array(payoffs)), np.array(opponent), gamma=0.9)
    assert response.actions[0] == action
    assert response.values[0] == pytest.approx(value)


def test_value_iteration_budget():
    t, r, terminal = chain_game()
    with pytest.raises(NoConvergence):
        best_response_value_iteration(TabularGame.single_agent(t, r, terminal), np.array([1.0]), gamma=0.9, max_iterations=2)


def test_best_response_input_errors():
    t, r, terminal = chain_game()
    game = TabularGame.single_agent(t, r, terminal)
    with pytest.raises(BadConfig):
        best_response_value_iteration(game, np.array([1.0]), gamma=1.0)
    with pytest.raises(BadSpec):
        best_response_value_iteration(game, np.ones((2, 1)), gamma=0.5)
    bad = t.copy()
    bad[0, 0, 1] = 0.5
    with pytest.raises(BadSpec):
        TabularGame.single_agent(bad, r, terminal)
    with pytest.raises(BadSpec):
        TabularGame(np.zeros((101, 10, 10, 101)), np.zeros((101, 10, 10)), np.ones(101, dtype=bool))


# ---------------------------------------------------------------------------
# Policy gradient
# ---------------------------------------------------------------------------

def test_discounted_and_n_step_returns():
    np.testing.assert_allclose(discounted_returns([1.0, 1.0, 1.0], 0.5), [1.75, 1.5, 1.0])
    np.testing.assert_allclose(discounted_returns([1.0], 0.5, bootstrap=2.0), [2.0])
    traj = [transition([0.0], 0, 1.0), transition([0.0], 0, 1.0), transition([0.0], 0, 1.0, done=True)]
    np.testing.assert_allclose(n_step_returns(traj, 0.5, 1, np.array([10.0, 20.0, 30.0])), [6.0, 11.0, 1.0])


def test_reinforce_solves_a_bandit(rng):
    policy = SoftmaxPolicy(1, 2, 0, rng)
    obs = np.ones(1)
    for _ in range(150):
        actions = [policy.sample(obs, rng) for _ in range(32)]
        trajectories = [[transition(obs, a, 1.0 if a == 0 else 0.0, done=True)] for a in actions]
        pg_update(policy, trajectories, gamma=0.9, lr=1.0)
    assert policy.probs(obs)[0] > 0.99


def test_zero_rewards_leave_policy_unchanged(rng):
    policy = SoftmaxPolicy(3, 2, 4, rng)
    before = policy.theta.values.copy()
    trajectories = [[transition(rng.normal(size=3), 1, 0.0, done=True)] for _ in range(5)]
    stats = pg_update(policy, trajectories, gamma=0.9, lr=1.0)
    np.testing.assert_array_equal(policy.theta.values, before)
    assert stats["policy_grad_norm"] == 0.0


def test_policy_gradient_matches_finite_differences(rng):
    policy = SoftmaxPolicy(3, 4, 5, rng)
    trajectories = [
        [transition(rng.normal(size=3), int(rng.integers(4)), float(rng.normal()), done=k == 2) for k in range(3)]
        for _ in range(3)
    ]
    analytic = pg_gradient(policy, trajectories, 0.9, entropy_coeff=0.05)
    numeric = numeric_gradient(lambda p: pg_objective(policy, trajectories, 0.9, p, entropy_coeff=0.05),
                               policy.theta.values.copy())
    np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-8)


def test_empty_trajectories(rng):
    with pytest.raises(EmptyTrajectory):
        pg_update(SoftmaxPolicy(2, 2, 0, rng), [[]], gamma=0.9, lr=0.1)


def test_actor_critic_update(rng):
    model = ActorCritic(3, 2, 4, rng)
    critic_before = model.critic.theta.values.copy()
    traj = [transition(rng.normal(size=3), k % 2, 1.0, rng.normal(size=3)) for k in range(4)]
    stats = pg_update(model, [traj], gamma=0.9, lr=0.05, n_step=2)
    assert set(stats) == {"mean_return", "policy_grad_norm", "value_loss"}
    assert stats["value_loss"] >= 0.0
    assert not np.array_equal(model.critic.theta.values, critic_before)
    assert model.theta.version == 1


def test_grad_clip_bounds_sgd_step(rng):
    policy = SoftmaxPolicy(3, 2, 4, rng)
    before = policy.theta.values
    trajectories = [[transition(rng.normal(size=3), k % 2, 100.0 * (k + 1), done=True)] for k in range(4)]
    stats = pg_update(policy, trajectories, gamma=0.9, lr=0.1, grad_clip=0.5)
    assert stats["policy_grad_norm"] > 0.5
    assert np.linalg.norm(policy.theta.values - before) <= 0.1 * 0.5 + 1e-9


# ---------------------------------------------------------------------------
# Topologies
# ---------------------------------------------------------------------------

def policy_factory(hidden):
    seeds = itertools.count()

    def build(key, index):
        return SoftmaxPolicy(3, 2, hidden, np.random.default_rng(next(seeds)))

    return build


def test_independent_topology():
    topology = configure_architecture(LearnerConfig(), ["a", "b", "c"], policy_factory(4))
    assert len(topology.models) == 3
    assert topology.n_learners == 3
    assert topology.buffer("a") is not topology.buffer("b")
    assert not topology.team_reward


def test_centralized_topology():
    topology = configure_architecture(LearnerConfig(architecture=Architecture.CENTRALIZED), 3, policy_factory(4))
    assert topology.agents == ["agent_0", "agent_1", "agent_2"]
    assert list(topology.models) == ["central"]
    assert topology.model("agent_0") is topology.model("agent_2")
    assert topology.buffer("agent_0") is topology.buffer("agent_1")
    assert topology.agents_of("central") == topology.agents
    assert topology.n_learners == 1
    assert topology.team_reward


def test_shared_policy_topology():
    topology = configure_architecture(LearnerConfig(architecture=Architecture.SHARED_POLICY), ["a", "b"], policy_factory(4))
    assert list(topology.models) == ["shared"]
    assert topology.model("a") is topology.model("b")
    assert topology.buffer("a") is topology.buffer("b")
    assert topology.buffer("a").shared
    assert topology.n_learners == 1


def test_shared_parameters_topology():
    topology = configure_architecture(LearnerConfig(architecture=Architecture.SHARED_PARAMETERS), ["a", "b"], policy_factory(4))
    a, b = topology.model("a"), topology.model("b")
    block = a.shared_block
    np.testing.assert_array_equal(a.theta.values[block], b.theta.values[block])
    assert not np.array_equal(a.theta.values[block.stop:], b.theta.values[block.stop:])

    values = b.theta.values.copy()
    values[block] += 1.0
    b.theta.assign(values)
    topology.sync_shared("b")
    np.testing.assert_array_equal(a.theta.values[block], b.theta.values[block])


def test_topology_errors():
    with pytest.raises(BadConfig):
        configure_architecture(LearnerConfig(architecture=Architecture.SHARED_PARAMETERS), ["a", "b"], policy_factory(0))
    with pytest.raises(BadConfig):
        configure_architecture(LearnerConfig(), [], policy_factory(4))
