import numpy as np
import pytest

from macad_errors import ActionOutOfRange, BadSpec, EpisodeOver, UnknownAgentId
from macad_grid import ADVANCE, GRID_SCENARIOS, WAIT, GridIntersectionEnv, GridSpec
from macad_learn import best_response_value_iteration

GRID = "HomoNcomIndeFOIntrxMAGrid2C-v0"


@pytest.fixture
def env():
    grid = GridIntersectionEnv.from_env_id(GRID)
    grid.reset(0)
    return grid


def play(env, script):
    totals = {a: 0.0 for a in env.agent_ids}
    result = None
    for actions in script:
        result = env.step(actions)
        for agent, r in result.rewards.items():
            totals[agent] += r
        if result.all_done:
            break
    return totals, result


def test_always_advance_reaches_both_goals(env):
    totals, result = play(env, [{"car1": ADVANCE, "car2": ADVANCE}] * 12)
    assert result.all_done
    assert env.tick == 5
    assert totals["car1"] == pytest.approx(1.0 - 4 * 0.05)
    assert totals["car2"] == pytest.approx(1.0 - 5 * 0.05)
    assert env.positions == {"car1": 4, "car2": 5}


def test_waiting_once_runs_into_the_other_car(env):
    script = [{"car1": WAIT, "car2": ADVANCE}] + [{"car1": ADVANCE, "car2": ADVANCE}] * 5
    _, result = play(env, script)
    assert env.tick == 3
    assert result.rewards == pytest.approx({"car1": -1.05, "car2": -1.05})
    assert result.dones == {"car1": True, "car2": True}
    assert result.all_done
    assert result.info["car1"]["collisions"][0]["agents"] == ["car1", "car2"]


def test_horizon_ends_episode(env):
    _, result = play(env, [{"car1": WAIT, "car2": WAIT}] * 12)
    assert env.tick == 12
    assert result.all_done
    with pytest.raises(EpisodeOver):
        env.step({"car1": WAIT, "car2": WAIT})


def test_observation_layout(env):
    result = env.step({"car1": ADVANCE, "car2": WAIT})
    np.testing.assert_array_equal(result.observations["car1"], [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(result.observations["car2"], [0.0, 1.0, 0.0])


def test_step_errors(env):
    with pytest.raises(ActionOutOfRange):
        env.step({"car1": 2})
    with pytest.raises(UnknownAgentId):
        env.step({"car7": 1})


def test_spec_validation():
    with pytest.raises(BadSpec):
        GridSpec(crossing={"a": 2}, length={"a": 4})
    with pytest.raises(BadSpec):
        GridSpec(crossing={"a": 4, "b": 1}, length={"a": 4, "b": 3})
    assert GRID_SCENARIOS["GRID_2C"].horizon == 12


def test_driving_id_is_not_a_grid():
    with pytest.raises(BadSpec):
        GridIntersectionEnv.from_env_id("HomoNcomIndePOIntrxMASS3CTwn3-v0")


def test_best_response_to_always_advance(env):
    game, states = env.tabular_model("car1")
    assert states[-1] == (-1, -1)
    response = best_response_value_iteration(game, np.array([0.0, 1.0]), gamma=0.95)
    assert response.actions[states.index((0, 0))] == ADVANCE
    # one cell behind with the other car about to enter the crossing
    assert response.actions[states.index((1, 2))] == WAIT
    assert response.values[-1] == 0.0


def test_tabular_model_unknown_agent(env):
    with pytest.raises(UnknownAgentId):
        env.tabular_model("car9")
