import io

from rich.console import Console

from macad_ui import RichTrainingUI


def make_ui():
    buffer = io.StringIO()
    return RichTrainingUI(Console(file=buffer, width=120, force_terminal=False)), buffer


def test_progress_tracks_best_reward():
    ui, _ = make_ui()
    ui.start(3, "episodes")
    ui.on_episode(0, -1.0, 5)
    ui.on_episode(1, 2.5, 10)
    ui.on_episode(2, 0.5, 15)
    assert ui.best == 2.5
    ui.stop()
    assert ui.progress is None
    ui.on_episode(3, 9.0, 20)
    assert ui.best == 2.5


def test_summary_tables():
    ui, buffer = make_ui()
    ui.show_training({"episode_rewards": {"car1": [1.0, 3.0], "car2": []}, "env_steps": 12,
                      "updates": 4, "success_rate": 0.5})
    ui.show_evaluation({"episodes": 2, "success_rate": 1.0, "mean_reward": 0.75, "collisions": 0})
    ui.show_envs([{"id": "HomoNcomIndeFOIntrxMAGrid2C-v0", "scenario": "GRID_2C", "description": "grid"}])
    text = buffer.getvalue()
    assert "Training summary" in text and "2.000" in text
    assert "Evaluation" in text and "0.750" in text
    assert "GRID_2C" in text
