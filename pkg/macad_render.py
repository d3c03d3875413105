"""Top-down episode snapshots as portable pixmaps plus a trajectory JSON."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import shapely

from macad_env_id import DEFAULT_REGISTRY, EnvRegistry, parse_env_id
from macad_errors import BadSpec, RenderIoError
from macad_pomg import MultiAgentDrivingEnv, WorldState
from macad_runtime import check_shapes, greedy_actions, load_checkpoint
from macad_world import COAST, ACTION_TABLE, footprint_polygon

RESOLUTION = 0.5  # m per pixel

BACKGROUND = (34, 139, 34)
ROAD = (90, 90, 90)
SIDEWALK = (200, 200, 190)
STOP_LINE = (255, 255, 255)
ROUTE = (255, 215, 0)
GOAL = (220, 20, 60)
ACTOR_COLOURS = [(30, 144, 255), (255, 140, 0), (148, 0, 211), (0, 206, 209), (255, 105, 180)]


class Canvas:
    """World-to-pixel raster; +y points down the image."""

    def __init__(self, bounds: Sequence[float], resolution: float = RESOLUTION) -> None:
        self.minx, self.miny, maxx, maxy = bounds
        self.resolution = resolution
        self.width = int(np.ceil((maxx - self.minx) / resolution))
        self.height = int(np.ceil((maxy - self.miny) / resolution))
        cols = self.minx + (np.arange(self.width) + 0.5) * resolution
        rows = self.miny + (np.arange(self.height) + 0.5) * resolution
        self.xs, self.ys = np.meshgrid(cols, rows)
        self.pixels = np.zeros((self.height, self.width, 3), dtype=np.uint8)
        self.pixels[:] = BACKGROUND

    def fill(self, geometry: Any, colour: Sequence[int]) -> None:
        if geometry is None or geometry.is_empty:
            return
        self.pixels[shapely.contains_xy(geometry, self.xs, self.ys)] = colour

    def dot(self, x: float, y: float, colour: Sequence[int], radius: int = 0) -> None:
        col = int((x - self.minx) / self.resolution)
        row = int((y - self.miny) / self.resolution)
        r0, r1 = max(row - radius, 0), min(row + radius + 1, self.height)
        c0, c1 = max(col - radius, 0), min(col + radius + 1, self.width)
        if r0 < r1 and c0 < c1:
            self.pixels[r0:r1, c0:c1] = colour

    def copy(self) -> "Canvas":
        clone = object.__new__(Canvas)
        clone.__dict__.update(self.__dict__)
        clone.pixels = self.pixels.copy()
        return clone

    def write_ppm(self, path: Path) -> None:
        header = f"P6\n{self.width} {self.height}\n255\n".encode("ascii")
        try:
            with Path(path).open("wb") as handle:
                handle.write(header)
                handle.write(self.pixels.tobytes())
        except OSError as exc:
            raise RenderIoError(f"cannot write {path}: {exc}", path=str(path)) from exc


def background(world: WorldState) -> Canvas:
    canvas = Canvas(world.map_model.bounds)
    canvas.fill(world.map_model.drivable, ROAD)
    canvas.fill(world.map_model.sidewalk_union, SIDEWALK)
    for stop in world.map_model.stop_lines:
        canvas.dot(*stop.point, STOP_LINE, radius=1)
    for agent in world.agent_ids:
        route = world.routes[agent]
        for s in np.arange(0.0, route.line.length, RESOLUTION / 2):
            p = route.line.interpolate(float(s))
            canvas.dot(p.x, p.y, ROUTE)
        canvas.dot(*world.goals[agent], GOAL, radius=2)
    return canvas


def draw_frame(base: Canvas, world: WorldState) -> Canvas:
    frame = base.copy()
    for i, agent in enumerate(world.agent_ids):
        state = world.actor_states[agent]
        colour = ACTOR_COLOURS[i % len(ACTOR_COLOURS)]
        frame.fill(footprint_polygon(state, world.params), colour if not state.done else (120, 120, 120))
    return frame


def load_action_script(path: Path) -> List[Dict[str, int]]:
    """JSON list of ``{agent: action}`` dicts, one per tick."""
    try:
        script = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BadSpec(f"cannot read action script {path}: {exc}", path=str(path)) from exc
    if not isinstance(script, list) or not all(isinstance(step, dict) for step in script):
        raise BadSpec("action script must be a JSON list of {agent: action} objects", path=str(path))
    return script


def render_episode(
    env_id: str,
    seed: int,
    out_dir: Path,
    *,
    checkpoint: Optional[Path] = None,
    actions: Optional[Sequence[Mapping[str, int]]] = None,
    max_ticks: Optional[int] = None,
    registry: EnvRegistry = DEFAULT_REGISTRY,
    env_overrides: Optional[Mapping[str, Any]] = None,
) -> Dict[str, Any]:
    """Run one episode and write ``frame_<tick>.ppm`` per tick plus ``trajectory.json``.

    Actions come from the script when given (agents missing from a tick
    repeat their last command), otherwise from the checkpoint's greedy
    policy, otherwise every agent coasts.
    """
    entry = registry.lookup(parse_env_id(env_id))
    if entry.kind != "driving":
        raise BadSpec(f"'{env_id}' has no top-down view", env_id=env_id)
    env = MultiAgentDrivingEnv.from_env_id(env_id, registry, env_overrides)
    header, views = None, {}
    if checkpoint is not None and actions is None:
        header, models = load_checkpoint(checkpoint)
        check_shapes(header, env)
        views = {key: model.snapshot() for key, model in models.items()}

    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RenderIoError(f"cannot create {out_dir}: {exc}", path=str(out_dir)) from exc

    obs = env.reset(seed)
    world = env.world
    base = background(world)
    limit = max_ticks if max_ticks is not None else (len(actions) if actions is not None else env.max_steps)
    rng = np.random.default_rng([seed, 3])
    states = [{"tick": 0, "actors": {a: s.to_json() for a, s in world.actor_states.items()}}]
    frames: List[str] = []
    digits = max(len(str(env.max_steps)), 5)

    for tick in range(limit):
        live = world.live_agents
        if not live or world.all_done:
            break
        if actions is not None:
            if tick >= len(actions):
                break
            joint = {a: v for a, v in actions[tick].items() if a in live or a not in world.actor_states}
        elif header is not None:
            joint = greedy_actions(header, views, obs, live, rng)
        else:
            joint = {a: ACTION_TABLE.index(COAST) for a in live}
        result = env.step(joint)
        obs = {**obs, **result.observations}
        name = f"frame_{world.tick:0{digits}d}.ppm"
        draw_frame(base, world).write_ppm(out_dir / name)
        frames.append(name)
        states.append({"tick": world.tick, "actors": {a: s.to_json() for a, s in world.actor_states.items()}})

    trajectory = {"env_id": env_id, "seed": seed, "frames": frames, "states": states}
    try:
        (out_dir / "trajectory.json").write_text(json.dumps(trajectory, indent=2, sort_keys=True), encoding="utf-8")
    except OSError as exc:
        raise RenderIoError(f"cannot write trajectory: {exc}", path=str(out_dir)) from exc
    return trajectory
