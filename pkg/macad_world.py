"""Deterministic 2D driving world.

Lane-graph maps, a stop-sign 3-way intersection template, route planning,
kinematic bicycle dynamics and the collision / sidewalk / opposing-lane
sensing the reward function reads.

Frame: heading is measured from +x towards +y and positive steer increases
it. Images are drawn with +y pointing down, so a positive steer reads as a
right turn, which is how the action table labels it.
"""
from __future__ import annotations

import json
import math
import operator
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from shapely.geometry import LineString, Point, Polygon
from shapely.ops import substring, unary_union

from macad_errors import (
    BadSpec,
    BadStopLine,
    DisconnectedGraph,
    NoPath,
    OutOfRange,
    OverlappingLanes,
)

_BASE_DIR = Path(__file__).parent
MAPS_DIR = _BASE_DIR / "maps"
SCENARIOS_DIR = _BASE_DIR / "scenarios"

PROJECTION_TOLERANCE = 5.0  # m, start/goal to lane graph
STOP_LINE_TOLERANCE = 0.5  # m
OVERLAP_TOLERANCE = 0.5  # m, shared centerline length or Hausdorff distance between centerlines
NODE_SNAP = 0.05  # m
GOAL_RADIUS = 2.0  # m
DAMAGE_PER_MPS = 1000.0


class ActorType(str, Enum):
    VEHICLE_4W = "vehicle_4W"
    VEHICLE_2W = "vehicle_2W"
    PEDESTRIAN = "pedestrian"


@dataclass(frozen=True)
class VehicleParams:
    max_steer: float = math.radians(35.0)
    max_accel: float = 3.0  # m/s^2
    max_brake: float = 8.0  # m/s^2
    max_speed: float = 20.0  # m/s
    drag: float = 0.0  # 1/s
    wheelbase: float = 2.5  # m
    length: float = 4.5  # m
    width: float = 2.0  # m
    dt: float = 0.1  # s


DEFAULT_PARAMS = VehicleParams()


@dataclass(frozen=True)
class ActorState:
    x: float
    y: float
    heading: float
    speed: float = 0.0
    actor_type: ActorType = ActorType.VEHICLE_4W
    accumulated_damage: float = 0.0
    done: bool = False

    @property
    def position(self) -> Tuple[float, float]:
        return (self.x, self.y)

    @property
    def velocity(self) -> np.ndarray:
        return self.speed * np.array([math.cos(self.heading), math.sin(self.heading)])

    def to_json(self) -> Dict[str, Any]:
        return {
            "x": self.x,
            "y": self.y,
            "heading": self.heading,
            "speed": self.speed,
            "actor_type": self.actor_type.value,
            "accumulated_damage": self.accumulated_damage,
            "done": self.done,
        }


@dataclass(frozen=True)
class ControlCommand:
    steer: float = 0.0
    throttle: float = 0.0
    brake: float = 0.0

    def __post_init__(self) -> None:
        if not -1.0 <= self.steer <= 1.0:
            raise OutOfRange(f"steer {self.steer} outside [-1, 1]", steer=self.steer)
        if not 0.0 <= self.throttle <= 1.0:
            raise OutOfRange(f"throttle {self.throttle} outside [0, 1]", throttle=self.throttle)
        if not 0.0 <= self.brake <= 1.0:
            raise OutOfRange(f"brake {self.brake} outside [0, 1]", brake=self.brake)


COAST = ControlCommand()

# action -> [steer, throttle, brake]
ACTION_TABLE: Tuple[ControlCommand, ...] = (
    ControlCommand(0.0, 1.0, 0.0),    # Accelerate
    ControlCommand(0.0, 0.0, 1.0),    # Brake
    ControlCommand(0.5, 0.0, 0.0),    # Turn Right
    ControlCommand(-0.5, 0.0, 0.0),   # Turn Left
    ControlCommand(0.25, 0.5, 0.0),   # Accelerate Right
    ControlCommand(-0.25, 0.5, 0.0),  # Accelerate Left
    ControlCommand(0.25, 0.0, 0.5),   # Brake Right
    ControlCommand(-0.25, 0.0, 0.5),  # Brake Left
    ControlCommand(0.0, 0.0, 0.0),    # Coast
)
N_ACTIONS = len(ACTION_TABLE)


def decode_action(action: int) -> ControlCommand:
    """Map a discrete action to its control command."""
    try:
        index = operator.index(action)
    except TypeError:
        raise OutOfRange(f"action {action!r} is not an integer", action=repr(action)) from None
    if isinstance(action, bool) or not 0 <= index < N_ACTIONS:
        raise OutOfRange(f"action {action!r} outside 0..{N_ACTIONS - 1}", action=repr(action))
    return ACTION_TABLE[index]


def step_kinematics(state: ActorState, cmd: ControlCommand, dt: float, params: VehicleParams = DEFAULT_PARAMS) -> ActorState:
    """Advance one actor by *dt* seconds with the kinematic bicycle model (reference point at the centre)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    delta = cmd.steer * params.max_steer
    accel = cmd.throttle * params.max_accel - cmd.brake * params.max_brake - params.drag * state.speed
    speed = min(max(state.speed + accel * dt, 0.0), params.max_speed)
    if speed == 0.0:
        return replace(state, speed=0.0)
    beta = math.atan(0.5 * math.tan(delta))
    x = state.x + speed * math.cos(state.heading + beta) * dt
    y = state.y + speed * math.sin(state.heading + beta) * dt
    heading = state.heading + speed / params.wheelbase * math.cos(beta) * math.tan(delta) * dt
    return replace(state, x=x, y=y, heading=heading, speed=speed)


def footprint_corners(state: ActorState, params: VehicleParams = DEFAULT_PARAMS) -> np.ndarray:
    """Four corners of the oriented footprint, shape (4, 2)."""
    c, s = math.cos(state.heading), math.sin(state.heading)
    rot = np.array([[c, -s], [s, c]])
    half = np.array([
        [params.length / 2, params.width / 2],
        [params.length / 2, -params.width / 2],
        [-params.length / 2, -params.width / 2],
        [-params.length / 2, params.width / 2],
    ])
    return (rot @ half.T).T + np.array([state.x, state.y])


def footprint_polygon(state: ActorState, params: VehicleParams = DEFAULT_PARAMS) -> Polygon:
    return Polygon(footprint_corners(state, params))


# ---------------------------------------------------------------------------
# Maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LaneSpec:
    name: str
    points: Tuple[Tuple[float, float], ...]
    width: float = 3.5


@dataclass(frozen=True)
class MapSpec:
    name: str
    lanes: Tuple[LaneSpec, ...]
    sidewalks: Tuple[Tuple[Tuple[float, float], ...], ...] = ()
    stop_lines: Tuple[Tuple[float, float], ...] = ()
    bounds: Optional[Tuple[float, float, float, float]] = None
    required_connections: Tuple[Tuple[Tuple[float, float], Tuple[float, float]], ...] = ()

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "MapSpec":
        try:
            lanes = tuple(
                LaneSpec(str(lane["name"]), tuple(tuple(map(float, p[:2])) for p in lane["points"]), float(lane.get("width", 3.5)))
                for lane in data.get("lanes", [])
            )
            return cls(
                name=str(data.get("name", "map")),
                lanes=lanes,
                sidewalks=tuple(tuple(tuple(map(float, p[:2])) for p in poly) for poly in data.get("sidewalks", [])),
                stop_lines=tuple(tuple(map(float, p[:2])) for p in data.get("stop_lines", [])),
                bounds=tuple(map(float, data["bounds"])) if data.get("bounds") else None,
                required_connections=tuple(
                    (tuple(map(float, a[:2])), tuple(map(float, b[:2]))) for a, b in data.get("required_connections", [])
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BadSpec(f"malformed map spec: {exc}") from exc


@dataclass(frozen=True)
class LaneSegment:
    index: int
    name: str
    line: LineString
    width: float
    polygon: Polygon
    start_node: int
    end_node: int

    @property
    def length(self) -> float:
        return self.line.length

    def direction_at(self, s: float) -> np.ndarray:
        """Unit tangent at arc length *s*."""
        a = self.line.interpolate(max(s - 0.5, 0.0))
        b = self.line.interpolate(min(s + 0.5, self.line.length))
        vec = np.array([b.x - a.x, b.y - a.y])
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else np.array([1.0, 0.0])


@dataclass(frozen=True)
class StopLine:
    segment: int
    offset: float  # m along the segment
    point: Tuple[float, float]


@dataclass(frozen=True)
class MapModel:
    name: str
    lanes: Tuple[LaneSegment, ...]
    nodes: Tuple[Tuple[float, float], ...]
    intersection_nodes: Tuple[int, ...]
    stop_lines: Tuple[StopLine, ...]
    sidewalks: Tuple[Polygon, ...]
    sidewalk_union: Any
    drivable: Any
    bounds: Tuple[float, float, float, float]
    graph: nx.DiGraph = field(repr=False)

    @property
    def incoming_segments(self) -> Tuple[int, ...]:
        return tuple(sorted({stop.segment for stop in self.stop_lines}))

    def successors(self, segment: int) -> List[int]:
        return sorted(self.graph.successors(segment))


def _snap_node(nodes: List[Tuple[float, float]], point: Tuple[float, float]) -> int:
    for idx, (nx_, ny_) in enumerate(nodes):
        if math.hypot(nx_ - point[0], ny_ - point[1]) <= NODE_SNAP:
            return idx
    nodes.append(point)
    return len(nodes) - 1


def build_map(spec: MapSpec) -> MapModel:
    """Validate a map spec and build its lane graph."""
    if not spec.lanes:
        raise DisconnectedGraph(f"map '{spec.name}' has no lanes", map=spec.name)

    nodes: List[Tuple[float, float]] = []
    lanes: List[LaneSegment] = []
    for index, lane in enumerate(spec.lanes):
        if len(lane.points) < 2 or lane.width <= 0:
            raise BadSpec(f"lane '{lane.name}' needs two points and a positive width", lane=lane.name)
        line = LineString(lane.points)
        if line.length <= 0:
            raise BadSpec(f"lane '{lane.name}' has zero length", lane=lane.name)
        lanes.append(
            LaneSegment(
                index=index,
                name=lane.name,
                line=line,
                width=lane.width,
                polygon=line.buffer(lane.width / 2, cap_style="flat"),
                start_node=_snap_node(nodes, lane.points[0]),
                end_node=_snap_node(nodes, lane.points[-1]),
            )
        )

    for i, a in enumerate(lanes):
        for b in lanes[i + 1:]:
            shared = a.line.intersection(b.line).length
            if shared > OVERLAP_TOLERANCE or a.line.hausdorff_distance(b.line) < OVERLAP_TOLERANCE:
                raise OverlappingLanes(f"lanes '{a.name}' and '{b.name}' overlap", lanes=[a.name, b.name])

    graph = nx.DiGraph()
    graph.add_nodes_from(lane.index for lane in lanes)
    for a in lanes:
        for b in lanes:
            if a.index != b.index and a.end_node == b.start_node:
                graph.add_edge(a.index, b.index, weight=a.length)

    degree = [0] * len(nodes)
    for lane in lanes:
        degree[lane.start_node] += 1
        degree[lane.end_node] += 1
    intersection_nodes = tuple(idx for idx, deg in enumerate(degree) if deg >= 3)

    stop_lines: List[StopLine] = []
    for point in spec.stop_lines:
        pt = Point(point)
        hits = [lane for lane in lanes if lane.line.distance(pt) <= STOP_LINE_TOLERANCE]
        if len(hits) != 1:
            raise BadStopLine(f"stop line {point} lies on {len(hits)} lane segments", point=list(point))
        stop_lines.append(StopLine(hits[0].index, hits[0].line.project(pt), tuple(point)))

    drivable = unary_union([lane.polygon for lane in lanes])
    sidewalks = tuple(Polygon(poly) for poly in spec.sidewalks)
    if spec.bounds is not None:
        bounds = spec.bounds
    else:
        minx, miny, maxx, maxy = unary_union([drivable, *sidewalks]).bounds
        bounds = (minx - 5.0, miny - 5.0, maxx + 5.0, maxy + 5.0)

    model = MapModel(
        name=spec.name,
        lanes=tuple(lanes),
        nodes=tuple(nodes),
        intersection_nodes=intersection_nodes,
        stop_lines=tuple(stop_lines),
        sidewalks=sidewalks,
        sidewalk_union=unary_union(sidewalks) if sidewalks else Polygon(),
        drivable=drivable,
        bounds=bounds,
        graph=nx.freeze(graph),
    )
    for start, goal in spec.required_connections:
        try:
            plan_route(model, start, goal)
        except NoPath as exc:
            raise DisconnectedGraph(f"map '{spec.name}' does not connect {start} to {goal}", start=list(start), goal=list(goal)) from exc
    return model


def project(map_model: MapModel, position: Sequence[float], tolerance: float = PROJECTION_TOLERANCE) -> Optional[Tuple[int, float]]:
    """Nearest lane segment and arc length for *position*; lowest index wins ties."""
    pt = Point(position[0], position[1])
    best: Optional[Tuple[float, int]] = None
    for lane in map_model.lanes:
        dist = lane.line.distance(pt)
        if dist <= tolerance and (best is None or dist < best[0]):
            best = (dist, lane.index)
    if best is None:
        return None
    lane = map_model.lanes[best[1]]
    return lane.index, lane.line.project(pt)


# ---------------------------------------------------------------------------
# Routes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Route:
    segments: Tuple[int, ...]
    line: LineString = field(repr=False)
    length_m: float
    stop_offsets: Tuple[float, ...] = ()

    @property
    def remaining_length(self) -> float:
        """Full route length in km."""
        return self.length_m / 1000.0

    @property
    def goal(self) -> Tuple[float, float]:
        x, y = self.line.coords[-1]
        return (x, y)

    def progress(self, position: Sequence[float]) -> float:
        """Metres travelled along the route after re-projecting *position*."""
        if self.length_m == 0.0:
            return 0.0
        return float(self.line.project(Point(position[0], position[1])))

    def remaining_km(self, position: Sequence[float]) -> float:
        return max(self.length_m - self.progress(position), 0.0) / 1000.0

    def next_stop_distance(self, position: Sequence[float]) -> Optional[float]:
        here = self.progress(position)
        ahead = [offset - here for offset in self.stop_offsets if offset >= here]
        return min(ahead) if ahead else None


def _path_cost(map_model: MapModel, path: Sequence[int]) -> float:
    return sum(map_model.lanes[idx].length for idx in path[:-1])


def _route_line(map_model: MapModel, path: Sequence[int], s_start: float, s_goal: float) -> LineString:
    coords: List[Tuple[float, float]] = []
    for pos, idx in enumerate(path):
        line = map_model.lanes[idx].line
        a = s_start if pos == 0 else 0.0
        b = s_goal if pos == len(path) - 1 else line.length
        piece = substring(line, a, b)
        pts = [(piece.x, piece.y)] if piece.geom_type == "Point" else list(piece.coords)
        for pt in pts:
            if not coords or math.hypot(coords[-1][0] - pt[0], coords[-1][1] - pt[1]) > 1e-9:
                coords.append(pt)
    if len(coords) == 1:
        coords.append(coords[0])
    return LineString(coords)


def plan_route(map_model: MapModel, start: Sequence[float], goal: Sequence[float]) -> Route:
    """Shortest lane path from *start* to *goal*; ties go to the lowest segment indices."""
    start_proj = project(map_model, start)
    goal_proj = project(map_model, goal)
    if start_proj is None or goal_proj is None:
        raise NoPath(f"{tuple(start)} or {tuple(goal)} is off the lane graph", start=list(start[:2]), goal=list(goal[:2]))
    (a, s_a), (b, s_b) = start_proj, goal_proj

    if a == b and s_b >= s_a:
        path: List[int] = [a]
    else:
        candidates: List[List[int]] = []
        sources = [a] if a != b else map_model.successors(a)
        for source in sources:
            try:
                for tail in nx.all_shortest_paths(map_model.graph, source, b, weight="weight"):
                    candidates.append(list(tail) if a != b else [a, *tail])
            except nx.NetworkXNoPath:
                continue
        if not candidates:
            raise NoPath(f"no lane path from {tuple(start)} to {tuple(goal)}", start=list(start[:2]), goal=list(goal[:2]))
        path = min(candidates, key=lambda p: (_path_cost(map_model, p), p))

    line = _route_line(map_model, path, s_a, s_b)
    length = 0.0 if (len(path) == 1 and s_b == s_a) else line.length
    stop_offsets = tuple(
        sorted(
            line.project(Point(stop.point))
            for stop in map_model.stop_lines
            if stop.segment in path and line.distance(Point(stop.point)) <= STOP_LINE_TOLERANCE
        )
    )
    return Route(tuple(path), line, length, stop_offsets)


# ---------------------------------------------------------------------------
# Sensing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CollisionEvent:
    agents: Tuple[str, str]
    relative_speed: float
    static: bool = False


def _separated(corners_a: np.ndarray, corners_b: np.ndarray) -> bool:
    for corners in (corners_a, corners_b):
        for i in range(4):
            edge = corners[(i + 1) % 4] - corners[i]
            axis = np.array([-edge[1], edge[0]])
            axis = axis / np.linalg.norm(axis)
            pa, pb = corners_a @ axis, corners_b @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return True
    return False


BOUNDARY = "boundary"


def detect_collisions(states: Mapping[str, ActorState], map_model: MapModel, params: VehicleParams = DEFAULT_PARAMS) -> List[CollisionEvent]:
    """Oriented-box overlaps between live actors and with the map boundary, one event per pair."""
    live = sorted((aid, st) for aid, st in states.items() if not st.done)
    corners = {aid: footprint_corners(st, params) for aid, st in live}
    events: List[CollisionEvent] = []
    for i, (aid, st) in enumerate(live):
        for bid, other in live[i + 1:]:
            if not _separated(corners[aid], corners[bid]):
                rel = float(np.linalg.norm(st.velocity - other.velocity))
                events.append(CollisionEvent((aid, bid), rel))
    minx, miny, maxx, maxy = map_model.bounds
    for aid, st in live:
        c = corners[aid]
        if c[:, 0].min() < minx or c[:, 0].max() > maxx or c[:, 1].min() < miny or c[:, 1].max() > maxy:
            events.append(CollisionEvent((aid, BOUNDARY), float(st.speed), static=True))
    return events


def lane_infractions(map_model: MapModel, state: ActorState, params: VehicleParams = DEFAULT_PARAMS) -> Tuple[float, float]:
    """(SW, OL): footprint fractions over sidewalks and over opposing lanes."""
    foot = footprint_polygon(state, params)
    area = foot.area
    sw = foot.intersection(map_model.sidewalk_union).area / area if not map_model.sidewalk_union.is_empty else 0.0

    heading = np.array([math.cos(state.heading), math.sin(state.heading)])
    centre = Point(state.x, state.y)
    aligned, opposing = [], []
    for lane in map_model.lanes:
        if not lane.polygon.intersects(foot):
            continue
        direction = lane.direction_at(lane.line.project(centre))
        (opposing if float(direction @ heading) < 0.0 else aligned).append(lane.polygon)
    ol = 0.0
    if opposing:
        region = unary_union(opposing)
        if aligned:
            region = region.difference(unary_union(aligned))
        ol = foot.intersection(region).area / area
    return min(max(sw, 0.0), 1.0), min(max(ol, 0.0), 1.0)


# ---------------------------------------------------------------------------
# Templates, map and scenario files
# ---------------------------------------------------------------------------

def _arc(center: Tuple[float, float], rx: float, ry: float, t0: float, t1: float, n: int = 9) -> Tuple[Tuple[float, float], ...]:
    ts = np.linspace(t0, t1, n)
    return tuple((float(center[0] + rx * math.cos(t)), float(center[1] + ry * math.sin(t))) for t in ts)


def town3_like_3way() -> MapSpec:
    """Stop-controlled T junction laid out around the reference Town03 scenario coordinates.

    Main road runs along x (lanes at y=62.6 heading +x and y=59 heading -x);
    the side road leaves the junction towards +y (lanes at x=170.5 heading -y
    and x=167 heading +y). The junction box spans x 163..177.5, y 57.2..64.4.
    """
    w = 3.6
    lanes = (
        LaneSpec("east_approach", ((120.0, 62.6), (163.0, 62.6)), w),
        LaneSpec("east_through", ((163.0, 62.6), (177.5, 62.6)), w),
        LaneSpec("east_exit", ((177.5, 62.6), (220.0, 62.6)), w),
        LaneSpec("west_approach", ((220.0, 59.0), (177.5, 59.0)), w),
        LaneSpec("west_through", ((177.5, 59.0), (163.0, 59.0)), w),
        LaneSpec("west_exit", ((163.0, 59.0), (120.0, 59.0)), w),
        LaneSpec("side_approach", ((170.5, 110.0), (170.5, 64.4)), 3.5),
        LaneSpec("side_exit", ((167.0, 64.4), (167.0, 110.0)), 3.5),
        # junction connectors (quarter ellipses)
        LaneSpec("side_to_west", _arc((163.0, 64.4), 7.5, 5.4, 0.0, -math.pi / 2), w),
        LaneSpec("side_to_east", _arc((177.5, 64.4), 7.0, 1.8, math.pi, 3 * math.pi / 2), w),
        LaneSpec("west_to_side", _arc((167.0, 59.0), 10.5, 5.4, 0.0, math.pi / 2), w),
        LaneSpec("east_to_side", _arc((167.0, 62.6), 4.0, 1.8, math.pi, math.pi / 2), w),
    )
    sidewalks = (
        ((120.0, 54.2), (220.0, 54.2), (220.0, 57.2), (120.0, 57.2)),
        ((120.0, 64.4), (165.25, 64.4), (165.25, 67.4), (120.0, 67.4)),
        ((172.25, 64.4), (220.0, 64.4), (220.0, 67.4), (172.25, 67.4)),
        ((162.25, 67.4), (165.25, 67.4), (165.25, 110.0), (162.25, 110.0)),
        ((172.25, 67.4), (175.25, 67.4), (175.25, 110.0), (172.25, 110.0)),
    )
    return MapSpec(
        name="town3_like_3way",
        lanes=lanes,
        sidewalks=sidewalks,
        stop_lines=((161.0, 62.6), (179.5, 59.0), (170.5, 66.4)),
        bounds=(115.0, 50.0, 225.0, 115.0),
        required_connections=(
            ((170.5, 80.0), (144.0, 59.0)),
            ((188.0, 59.0), (167.0, 75.7)),
            ((147.6, 62.6), (191.2, 62.7)),
        ),
    )


MAP_TEMPLATES = {"town3_like_3way": town3_like_3way}


def load_map(name_or_path: str) -> MapModel:
    """Build a map from a template name, a file under ``maps/`` or a JSON path."""
    if name_or_path in MAP_TEMPLATES:
        return build_map(MAP_TEMPLATES[name_or_path]())
    path = MAPS_DIR / f"{name_or_path}.json"
    if not path.is_file():
        path = Path(name_or_path)
    if not path.is_file():
        raise BadSpec(f"unknown map '{name_or_path}'", map=name_or_path)
    return build_map(MapSpec.from_json(json.loads(path.read_text(encoding="utf-8"))))


@dataclass(frozen=True)
class ActorPlacement:
    start: Tuple[float, float, float]
    end: Tuple[float, float, float]


@dataclass(frozen=True)
class Scenario:
    name: str
    map: str
    actors: Mapping[str, ActorPlacement]
    weather_distribution: Tuple[int, ...] = (0,)
    max_steps: int = 500

    @classmethod
    def from_json(cls, name: str, data: Mapping[str, Any]) -> "Scenario":
        try:
            actors = {
                actor: ActorPlacement(_xyz(block["start"]), _xyz(block["end"]))
                for actor, block in data["actors"].items()
            }
            scenario = cls(
                name=name,
                map=str(data["map"]),
                actors=actors,
                weather_distribution=tuple(int(w) for w in data.get("weather_distribution", [0])),
                max_steps=int(data.get("max_steps", 500)),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise BadSpec(f"malformed scenario '{name}': {exc}", scenario=name) from exc
        if scenario.max_steps <= 0:
            raise BadSpec(f"scenario '{name}' needs max_steps > 0", scenario=name)
        if not scenario.actors:
            raise BadSpec(f"scenario '{name}' has no actors", scenario=name)
        if not scenario.weather_distribution:
            raise BadSpec(f"scenario '{name}' has an empty weather distribution", scenario=name)
        return scenario

    def to_json(self) -> Dict[str, Any]:
        return {
            "map": self.map,
            "actors": {name: {"start": list(p.start), "end": list(p.end)} for name, p in self.actors.items()},
            "weather_distribution": list(self.weather_distribution),
            "max_steps": self.max_steps,
        }

    def validate(self, map_model: MapModel) -> None:
        for actor, placement in self.actors.items():
            for label, point in (("start", placement.start), ("end", placement.end)):
                if project(map_model, point) is None:
                    raise BadSpec(
                        f"{actor} {label} {point[:2]} is more than {PROJECTION_TOLERANCE} m from any lane",
                        scenario=self.name, actor=actor,
                    )


def _xyz(values: Sequence[float]) -> Tuple[float, float, float]:
    # z is a spawn height in the source listings; the world is planar.
    xs = [float(v) for v in values]
    if len(xs) not in (2, 3):
        raise ValueError(f"expected [x, y] or [x, y, z], got {values}")
    return (xs[0], xs[1], xs[2] if len(xs) == 3 else 0.0)


def load_scenario(name_or_path: str) -> Scenario:
    path = SCENARIOS_DIR / f"{name_or_path}.json"
    if not path.is_file():
        path = Path(name_or_path)
    if not path.is_file():
        raise BadSpec(f"unknown scenario '{name_or_path}'", scenario=name_or_path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BadSpec(f"scenario file {path} is not JSON: {exc}") from exc
    return Scenario.from_json(path.stem, data)
