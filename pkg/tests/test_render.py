import json

import pytest

from macad_errors import BadSpec
from macad_pomg import MultiAgentDrivingEnv
from macad_render import load_action_script, render_episode

SS1C = "HomoNcomIndePOIntrxSASS1CTwn3-v0"
SS3C = "HomoNcomIndePOIntrxMASS3CTwn3-v0"
SCRIPT = [{"car3": 0}, {"car3": 0}, {"car3": 4}, {"car3": 4}, {"car3": 1}]


def test_scripted_episode_writes_frames(tmp_path):
    trajectory = render_episode(SS1C, 0, tmp_path, actions=SCRIPT)
    names = [f"frame_{tick:05d}.ppm" for tick in range(1, 6)]
    assert trajectory["frames"] == names
    for name in names:
        assert (tmp_path / name).exists()
    assert len(trajectory["states"]) == 6
    assert json.loads((tmp_path / "trajectory.json").read_text(encoding="utf-8")) == trajectory


def test_frame_is_binary_ppm(tmp_path):
    render_episode(SS1C, 0, tmp_path, actions=SCRIPT[:1])
    data = (tmp_path / "frame_00001.ppm").read_bytes()
    header = b"P6\n220 130\n255\n"
    assert data.startswith(header)
    assert len(data) == len(header) + 220 * 130 * 3


def test_same_seed_same_trajectory(tmp_path):
    render_episode(SS3C, 2, tmp_path / "a", max_ticks=4)
    render_episode(SS3C, 2, tmp_path / "b", max_ticks=4)
    first = (tmp_path / "a" / "trajectory.json").read_text(encoding="utf-8")
    assert first == (tmp_path / "b" / "trajectory.json").read_text(encoding="utf-8")
    assert (tmp_path / "a" / "frame_00004.ppm").read_bytes() == (tmp_path / "b" / "frame_00004.ppm").read_bytes()


def test_trajectory_replays(tmp_path):
    trajectory = render_episode(SS1C, 7, tmp_path, actions=SCRIPT)
    env = MultiAgentDrivingEnv.from_env_id(SS1C)
    env.reset(7)
    for tick, actions in enumerate(SCRIPT, start=1):
        env.step(actions)
        replayed = {a: s.to_json() for a, s in env.world.actor_states.items()}
        assert json.loads(json.dumps(replayed)) == trajectory["states"][tick]["actors"]


def test_grid_env_has_no_view(tmp_path):
    with pytest.raises(BadSpec):
        render_episode("HomoNcomIndeFOIntrxMAGrid2C-v0", 0, tmp_path)


@pytest.mark.parametrize("content", ['{"car3": 0}', "not json", '[{"car3": 0}, 3]'])
def test_bad_action_scripts(tmp_path, content):
    path = tmp_path / "actions.json"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(BadSpec):
        load_action_script(path)


def test_action_script_loads(tmp_path):
    path = tmp_path / "actions.json"
    path.write_text(json.dumps(SCRIPT), encoding="utf-8")
    assert load_action_script(path) == SCRIPT
