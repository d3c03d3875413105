from __future__ import annotations

from typing import Any, Iterable, Mapping, Optional

from rich.console import Console
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeElapsedColumn
from rich.table import Table


class RichTrainingUI:
    """Progress bar and summary tables on stderr; stdout stays machine-readable."""

    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console(stderr=True)
        self.progress: Optional[Progress] = None
        self.task = None
        self.by_steps = False
        self.best = float("-inf")

    def start(self, total: Optional[int], description: str):
        self.by_steps = description == "steps"
        self.progress = Progress(
            TextColumn("[bold cyan]{task.description}"),
            BarColumn(),
            MofNCompleteColumn(),
            TextColumn("best {task.fields[best]}"),
            TimeElapsedColumn(),
            console=self.console,
            transient=False,
        )
        self.task = self.progress.add_task(description, total=total, best="-")
        self.progress.start()

    def on_episode(self, episode: int, team_reward: float, env_steps: int):
        if self.progress is None:
            return
        self.best = max(self.best, team_reward)
        completed = env_steps if self.by_steps else episode + 1
        self.progress.update(self.task, completed=completed, best=f"{self.best:.2f}")

    def stop(self):
        if self.progress is not None:
            self.progress.stop()
            self.progress = None

    def show_training(self, report: Mapping[str, Any]):
        table = Table(title="Training summary", border_style="green")
        table.add_column("agent")
        table.add_column("episodes", justify="right")
        table.add_column("mean reward", justify="right")
        table.add_column("max reward", justify="right")
        for agent, rewards in report["episode_rewards"].items():
            mean = sum(rewards) / len(rewards) if rewards else 0.0
            best = max(rewards) if rewards else 0.0
            table.add_row(agent, str(len(rewards)), f"{mean:.3f}", f"{best:.3f}")
        self.console.print(table)
        self.console.print(
            f"[cyan]{report['env_steps']} env steps, {report['updates']} updates, "
            f"success rate {report['success_rate']:.2f}[/]"
        )

    def show_evaluation(self, report: Mapping[str, Any]):
        table = Table(title="Evaluation", border_style="cyan")
        for column in ("episodes", "success rate", "mean reward", "collisions"):
            table.add_column(column, justify="right")
        table.add_row(str(report["episodes"]), f"{report['success_rate']:.2f}",
                      f"{report['mean_reward']:.3f}", str(report["collisions"]))
        self.console.print(table)

    def show_envs(self, rows: Iterable[Mapping[str, Any]]):
        table = Table(title="Registered environments", border_style="magenta")
        table.add_column("id")
        table.add_column("scenario")
        table.add_column("description")
        for row in rows:
            table.add_row(row["id"], row["scenario"], row["description"])
        self.console.print(table)
