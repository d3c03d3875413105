from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from macad_env_id import DEFAULT_REGISTRY, format_env_id, list_envs, parse_env_id
from macad_errors import BadConfig, MacadError
from macad_learn import LearnerConfig
from macad_logging import close as close_logs
from macad_logging import init as init_logs
from macad_logging import system_log, system_warn
from macad_render import load_action_script, render_episode
from macad_runtime import ALGOS, TrainingReport, evaluate, get_algorithm, run_actor_learner, save_checkpoint
from macad_ui import RichTrainingUI

SEED_ENV_VAR = "MACAD_SEED"
_EXPERIMENT_BLOCKS = ("learner", "env", "adversarial")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="macad",
        description="Train, evaluate and inspect multi-agent driving environments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="Train learners and write metrics, checkpoint and summary")
    train.add_argument("--env", required=True, help="Environment ID, e.g. HomoNcomIndePOIntrxMASS3CTwn3-v0")
    train.add_argument("--config", type=Path, help="Experiment JSON with learner/env/adversarial overrides")
    train.add_argument("--algo", default="independent_q", choices=sorted(ALGOS))
    train.add_argument("--steps", type=int, default=None, help="Environment-step budget")
    train.add_argument("--episodes", type=int, default=None, help="Episode budget")
    train.add_argument("--seed", type=int, default=None, help=f"Seed (falls back to ${SEED_ENV_VAR}, then 0)")
    train.add_argument("--out", type=Path, default=None, help="Output directory (defaults to runs/<env id>)")
    train.add_argument("--render", action="store_true", help="Render one greedy episode after training")
    train.add_argument("--quiet", action="store_true", help="No progress output on stderr")

    ev = sub.add_parser("evaluate", help="Greedy rollouts of a checkpoint")
    ev.add_argument("--checkpoint", required=True, type=Path)
    ev.add_argument("--env", required=True)
    ev.add_argument("--episodes", type=int, default=100)
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument("--quiet", action="store_true")

    render = sub.add_parser("render", help="Write one top-down image per tick and a trajectory JSON")
    render.add_argument("--env", required=True)
    source = render.add_mutually_exclusive_group()
    source.add_argument("--checkpoint", type=Path)
    source.add_argument("--actions", type=Path, help="JSON list of {agent: action} per tick")
    render.add_argument("--seed", type=int, default=None)
    render.add_argument("--out", required=True, type=Path)
    render.add_argument("--ticks", type=int, default=None)

    parse = sub.add_parser("parse-id", help="Print the taxonomy attributes of an environment ID")
    parse.add_argument("env_id")

    ls = sub.add_parser("list-envs", help="List registered environment IDs")
    ls.add_argument("--filter", action="append", default=[], metavar="KEY=VALUE",
                    help="Attribute filter, e.g. observability=PO or flags=Async (repeatable)")
    ls.add_argument("--table", action="store_true", help="Also print a table on stderr")
    return parser


def resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return seed
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise BadConfig(f"${SEED_ENV_VAR}={raw!r} is not an integer", value=raw) from None


def load_experiment_file(path: Optional[Path]) -> Dict[str, Dict[str, Any]]:
    """Split an experiment file into its ``learner`` / ``env`` / ``adversarial`` blocks."""
    if path is None:
        return {block: {} for block in _EXPERIMENT_BLOCKS}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BadConfig(f"cannot read config {path}: {exc}", path=str(path)) from exc
    if not isinstance(data, dict):
        raise BadConfig(f"config {path} must hold a JSON object", path=str(path))
    unknown = sorted(set(data) - set(_EXPERIMENT_BLOCKS))
    if unknown:
        system_warn(f"config keys ignored: {', '.join(unknown)}")
    return {block: dict(data.get(block) or {}) for block in _EXPERIMENT_BLOCKS}


@dataclass
class ExperimentConfig:
    env_id: str
    learner: LearnerConfig
    algo: str = "independent_q"
    seed: int = 0
    budget_steps: Optional[int] = None
    budget_episodes: Optional[int] = None
    out_dir: Path = Path("runs")
    render: bool = False
    env_overrides: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.env_id = format_env_id(parse_env_id(self.env_id))
        get_algorithm(self.algo).check_architecture(self.learner.architecture)
        if self.budget_steps is None and self.budget_episodes is None:
            raise BadConfig("train needs --steps and/or --episodes")
        try:
            self.out_dir = Path(self.out_dir)
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise BadConfig(f"output directory {self.out_dir} is not writable: {exc}") from exc

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "ExperimentConfig":
        blocks = load_experiment_file(args.config)
        algorithm = get_algorithm(args.algo)
        learner = dict(blocks["learner"])
        learner.setdefault("architecture", algorithm.architecture.value)
        env_id = args.env
        return cls(
            env_id=env_id,
            learner=LearnerConfig.from_mapping(learner),
            algo=args.algo,
            seed=resolve_seed(args.seed),
            budget_steps=args.steps,
            budget_episodes=args.episodes,
            out_dir=args.out if args.out is not None else Path("runs") / env_id,
            render=args.render,
            env_overrides={k: blocks[k] for k in ("env", "adversarial") if blocks[k]},
        )


def run_experiment(config: ExperimentConfig, ui: Optional[RichTrainingUI] = None) -> Tuple[TrainingReport, Dict[str, str]]:
    """Train, then write metrics JSONL, checkpoint and summary JSON under ``config.out_dir``."""
    out = config.out_dir
    metrics_path = init_logs("train", str(out))
    try:
        run = run_actor_learner(
            config.env_id, config.learner, config.seed,
            budget_steps=config.budget_steps, budget_episodes=config.budget_episodes,
            algo=config.algo, env_overrides=config.env_overrides, ui=ui,
        )
        checkpoint = save_checkpoint(out / "checkpoint.npz", run)
        artifacts = {"metrics": str(metrics_path), "checkpoint": str(checkpoint),
                     "summary": str(out / "summary.json"), "log": str(out / "train.log")}
        if config.render:
            render_episode(config.env_id, config.seed, out / "render", checkpoint=checkpoint,
                           env_overrides=config.env_overrides)
            artifacts["render"] = str(out / "render")
        summary = {**run.report.to_json(), "artifacts": artifacts, "config_hash": run.header["config_hash"]}
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
        system_log(f"wrote {artifacts}")
    finally:
        close_logs()
    return run.report, artifacts


def _parse_filters(items: Iterable[str]) -> Dict[str, Any]:
    filters: Dict[str, Any] = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise BadConfig(f"filter '{item}' is not KEY=VALUE", filter=item)
        if key == "flags":
            filters.setdefault("flags", []).extend(v for v in value.split(",") if v)
        else:
            filters[key] = value
    return filters


def _emit(data: Mapping[str, Any]) -> None:
    print(json.dumps(data, sort_keys=True))


def _cmd_train(args: argparse.Namespace) -> int:
    config = ExperimentConfig.from_args(args)
    ui = None if args.quiet else RichTrainingUI()
    report, artifacts = run_experiment(config, ui)
    if ui is not None:
        ui.show_training(report.to_json())
    _emit({"episodes": report.episodes, "env_steps": report.env_steps, "updates": report.updates,
           "success_rate": report.success_rate(), "artifacts": artifacts})
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    report = evaluate(args.checkpoint, args.env, args.episodes, resolve_seed(args.seed))
    if not args.quiet:
        RichTrainingUI().show_evaluation(report.to_json())
    _emit(report.to_json())
    return 0


def _cmd_render(args: argparse.Namespace) -> int:
    actions = load_action_script(args.actions) if args.actions else None
    trajectory = render_episode(args.env, resolve_seed(args.seed), args.out, checkpoint=args.checkpoint,
                                actions=actions, max_ticks=args.ticks)
    _emit({"frames": len(trajectory["frames"]), "out": str(args.out),
           "trajectory": str(Path(args.out) / "trajectory.json")})
    return 0


def _cmd_parse_id(args: argparse.Namespace) -> int:
    parsed = parse_env_id(args.env_id)
    _emit({**parsed.to_json(), "canonical": format_env_id(parsed)})
    return 0


def _cmd_list_envs(args: argparse.Namespace) -> int:
    try:
        ids = list_envs(DEFAULT_REGISTRY, _parse_filters(args.filter))
    except ValueError as exc:
        raise BadConfig(str(exc)) from exc
    if args.table:
        rows = [{"id": i, "scenario": DEFAULT_REGISTRY.lookup(i).scenario,
                 "description": DEFAULT_REGISTRY.lookup(i).description} for i in ids]
        RichTrainingUI().show_envs(rows)
    _emit({"envs": ids})
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "render": _cmd_render,
    "parse-id": _cmd_parse_id,
    "list-envs": _cmd_list_envs,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except MacadError as exc:
        _emit(exc.to_json())
        return exc.exit_status
    except OSError as exc:
        _emit({"kind": type(exc).__name__, "message": str(exc)})
        return 3


if __name__ == "__main__":
    sys.exit(main())
