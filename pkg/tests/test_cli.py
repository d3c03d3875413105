import json
from types import SimpleNamespace

import pytest

from macad_cli import ExperimentConfig, load_experiment_file, main, resolve_seed
from macad_errors import BadConfig
from macad_learn import Architecture, LearnerConfig

GRID = "HomoNcomIndeFOIntrxMAGrid2C-v0"
SS3C = "HomoNcomIndePOIntrxMASS3CTwn3-v0"


def run_cli(capsys, *argv):
    status = main(list(argv))
    out = capsys.readouterr().out.strip().splitlines()
    return status, json.loads(out[-1]) if out else None


@pytest.fixture
def grid_config(tmp_path):
    path = tmp_path / "grid.json"
    path.write_text(json.dumps({"learner": {"tabular": True, "lr": 0.5, "batch_size": 4}}), encoding="utf-8")
    return path


def train_grid(capsys, out, config, *extra):
    return run_cli(capsys, "train", "--env", GRID, "--config", str(config), "--episodes", "20",
                   "--seed", "3", "--out", str(out), "--quiet", *extra)


def test_parse_id(capsys):
    status, data = run_cli(capsys, "parse-id", "HomoNcomIndePOIntrxMASS3CTwn3-v0")
    assert status == 0
    assert data["observability"] == "PO"
    assert data["usid"] == "SS3CTwn3"
    assert data["canonical"] == "HomoNcomIndePOIntrxMASS3CTwn3-v0"


def test_parse_id_error(capsys):
    status, data = run_cli(capsys, "parse-id", "HomoXcomIndePOIntrxMASS3CTwn3-v0")
    assert status == 2
    assert data["kind"] == "UnknownToken"


def test_list_envs(capsys):
    status, data = run_cli(capsys, "list-envs", "--filter", "observability=FO")
    assert status == 0
    assert data["envs"] == ["HomoNcomIndeFOHiwaySynchMAEnv-v0", GRID]
    _, data = run_cli(capsys, "list-envs", "--filter", "flags=Async", "--filter", "multiplicity=MA")
    assert data["envs"] == ["HomoNcomIndePOIntrxAsyncMASS3CTwn3-v0"]


@pytest.mark.parametrize("bad", ["observability", "colour=red"])
def test_list_envs_bad_filter(capsys, bad):
    status, data = run_cli(capsys, "list-envs", "--filter", bad)
    assert status == 2
    assert data["kind"] == "BadConfig"


def test_train_writes_artifacts(capsys, tmp_path, grid_config):
    out = tmp_path / "run"
    status, data = train_grid(capsys, out, grid_config)
    assert status == 0
    assert data["episodes"] == 20
    for name in ("train.metrics.jsonl", "train.log", "checkpoint.npz", "summary.json"):
        assert (out / name).exists()
    records = [json.loads(line) for line in (out / "train.metrics.jsonl").read_text(encoding="utf-8").splitlines()]
    assert len(records) == 40
    assert {r["agent"] for r in records} == {"car1", "car2"}
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["episodes"] == 20
    assert len(summary["cumulative_mean"]) == 20
    assert summary["config"]["learner"]["tabular"] is True


def test_identical_runs_identical_metrics(capsys, tmp_path, grid_config):
    train_grid(capsys, tmp_path / "a", grid_config)
    train_grid(capsys, tmp_path / "b", grid_config)
    first = (tmp_path / "a" / "train.metrics.jsonl").read_bytes()
    assert first == (tmp_path / "b" / "train.metrics.jsonl").read_bytes()


def test_evaluate_checkpoint(capsys, tmp_path, grid_config):
    train_grid(capsys, tmp_path, grid_config)
    checkpoint = str(tmp_path / "checkpoint.npz")
    status, data = run_cli(capsys, "evaluate", "--checkpoint", checkpoint, "--env", GRID, "--episodes", "3", "--quiet")
    assert status == 0
    assert data["episodes"] == 3
    assert len(data["team_rewards"]) == 3
    _, data = run_cli(capsys, "evaluate", "--checkpoint", checkpoint, "--env", GRID, "--episodes", "0", "--quiet")
    assert data["episodes"] == 0


def test_evaluate_shape_mismatch(capsys, tmp_path, grid_config):
    train_grid(capsys, tmp_path, grid_config)
    status, data = run_cli(capsys, "evaluate", "--checkpoint", str(tmp_path / "checkpoint.npz"),
                           "--env", "HomoNcomIndePOIntrxMASS3CTwn3-v0", "--quiet")
    assert status == 3
    assert data["kind"] == "ShapeMismatch"


def test_render_command(capsys, tmp_path):
    actions = tmp_path / "actions.json"
    actions.write_text(json.dumps([{"car3": 0}] * 3), encoding="utf-8")
    status, data = run_cli(capsys, "render", "--env", "HomoNcomIndePOIntrxSASS1CTwn3-v0",
                           "--actions", str(actions), "--out", str(tmp_path / "frames"))
    assert status == 0
    assert data["frames"] == 3


def test_train_needs_a_budget(capsys, tmp_path):
    status, data = run_cli(capsys, "train", "--env", GRID, "--out", str(tmp_path), "--quiet")
    assert status == 2
    assert data["kind"] == "BadConfig"


def test_unknown_algo_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit):
        main(["train", "--env", GRID, "--algo", "dqn", "--episodes", "1", "--out", str(tmp_path)])


def test_seed_fallback(monkeypatch):
    monkeypatch.delenv("MACAD_SEED", raising=False)
    assert resolve_seed(None) == 0
    monkeypatch.setenv("MACAD_SEED", "17")
    assert resolve_seed(None) == 17
    assert resolve_seed(4) == 4
    monkeypatch.setenv("MACAD_SEED", "seventeen")
    with pytest.raises(BadConfig):
        resolve_seed(None)


def test_experiment_file(tmp_path):
    assert load_experiment_file(None) == {"learner": {}, "env": {}, "adversarial": {}}
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"env": {"max_slots": 4}, "notes": "ignored"}), encoding="utf-8")
    assert load_experiment_file(path) == {"learner": {}, "env": {"max_slots": 4}, "adversarial": {}}
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(BadConfig):
        load_experiment_file(path)
    with pytest.raises(BadConfig):
        load_experiment_file(tmp_path / "missing.json")


def test_experiment_config_validation(tmp_path):
    config = ExperimentConfig(GRID, LearnerConfig(), budget_episodes=1, out_dir=tmp_path / "x")
    assert config.budget_episodes == 1
    assert (tmp_path / "x").is_dir()
    with pytest.raises(BadConfig):
        ExperimentConfig(GRID, LearnerConfig(), algo="dqn", budget_episodes=1, out_dir=tmp_path)


def test_config_architecture_must_fit_algo(capsys, tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"learner": {"architecture": "IndependentDecentralized"}}), encoding="utf-8")
    status, data = run_cli(capsys, "train", "--env", GRID, "--config", str(path), "--algo", "shared_policy",
                           "--episodes", "1", "--out", str(tmp_path / "run"), "--quiet")
    assert status == 2
    assert data["kind"] == "BadConfig"
    assert data["algo"] == "shared_policy"


def test_algo_picks_architecture_when_config_is_silent(tmp_path):
    args = SimpleNamespace(config=None, algo="central_ac", env=GRID, seed=0, steps=None, episodes=1,
                           out=tmp_path, render=False)
    assert ExperimentConfig.from_args(args).learner.architecture is Architecture.CENTRALIZED


def test_driving_runs_are_reproducible(capsys, tmp_path):
    config = tmp_path / "drive.json"
    config.write_text(json.dumps({"learner": {"hidden_width": 8, "batch_size": 8}, "env": {"max_steps": 15}}),
                      encoding="utf-8")
    for name in ("a", "b"):
        status, data = run_cli(capsys, "train", "--env", SS3C, "--config", str(config), "--episodes", "3",
                               "--seed", "11", "--out", str(tmp_path / name), "--quiet")
        assert status == 0
        assert data["episodes"] == 3
    first = (tmp_path / "a" / "train.metrics.jsonl").read_text(encoding="utf-8")
    assert first == (tmp_path / "b" / "train.metrics.jsonl").read_text(encoding="utf-8")
    records = [json.loads(line) for line in first.splitlines()]
    assert len(records) == 9
    assert all(r["length"] <= 15 for r in records)
