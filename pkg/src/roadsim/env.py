"""Scenario orchestration: seeded episodic reset/step over a world.

A scenario config names a map, optional recorded or synthetic traffic, the
learning agents with their sensor suites, and a scoring id. reset() builds
the world deterministically from (config, seed); step() runs one fixed
pipeline tick. All randomness flows through named substreams split from the
single episode seed, so adding a consumer never perturbs the others.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np

from . import jsonfmt
from .agents import (
    Action,
    ParticipantSpec,
    ParticipantState,
    ReplayModel,
    SignalProgram,
    WorldView,
    behavior_decide,
    footprint_of,
    signal_state_at,
    step_bicycle,
)
from .errors import ConfigError, ContractError, LoadError, SpawnError
from .events import DetectorState, EventRecord, step_detector
from .geometry import (
    ConvexPolygon,
    Point2,
    Polyline,
    Pose2,
    angle_diff,
    footprints_overlap,
    project_to_polyline,
)
from .map_model import TrafficMap, lane_direction_at
from .map_parsers import ProjectionSpec, parse_opendrive, parse_osm_lanelet2
from .sensors import BevSpec, LidarSpec, VectorSpec, render_bev, scan_lidar, vectorize
from .traffic_data import (
    AlignmentSpec,
    Track,
    TrajectoryDataset,
    align,
    parse_tracks,
    state_at,
    synth_fixture,
)

SCENARIO_KINDS = ("racing", "parking", "highway", "urban", "roundabout")
DEFAULT_DT = 0.1
DEFAULT_MAX_STEPS = 500
DEFAULT_SPEED_LIMIT = 13.9  # m/s, used where the lane declares none
REFERENCE_PATH_MAX_LANES = 32  # successor-walk bound for agent paths

ScoringFn = Callable[
    [str, WorldView, WorldView, Sequence[EventRecord]], float
]


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent named RNG stream derived from the episode seed."""
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------

def _require_keys(data: Mapping, allowed: set[str], what: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")


@dataclass(frozen=True)
class MapSource:
    """Map file reference; format inferred from the suffix when omitted."""

    path: str
    format: Optional[str] = None
    origin: Optional[tuple[float, float]] = None  # (lat, lon) for .osm

    def __post_init__(self):
        fmt = self.resolved_format
        if fmt not in ("osm", "xodr"):
            raise ConfigError(f"unknown map format {fmt!r}")
        if fmt == "osm" and self.origin is None:
            raise ConfigError("osm maps need a projection origin (lat, lon)")

    @property
    def resolved_format(self) -> str:
        if self.format is not None:
            return self.format
        return Path(self.path).suffix.lstrip(".").lower()


@dataclass(frozen=True)
class TrafficSource:
    """Recorded trajectory CSV, or a synthetic in-lane track count."""

    path: Optional[str] = None
    schema: Optional[str] = None
    alignment: AlignmentSpec = AlignmentSpec()
    synth_tracks: Optional[int] = None

    def __post_init__(self):
        recorded = self.path is not None
        if recorded == (self.synth_tracks is not None):
            raise ConfigError(
                "traffic source needs either a dataset path or a synthetic "
                "track count, not both"
            )
        if recorded and self.schema is None:
            raise ConfigError("recorded traffic needs a schema id")
        if self.synth_tracks is not None and self.synth_tracks < 0:
            raise ConfigError("synthetic track count must be non-negative")


@dataclass(frozen=True)
class SensorSuite:
    """Per-agent sensor configuration; any subset may be enabled."""

    bev: Optional[BevSpec] = None
    lidar: Optional[LidarSpec] = None
    vector: Optional[VectorSpec] = None

    @property
    def empty(self) -> bool:
        return self.bev is None and self.lidar is None and self.vector is None


@dataclass(frozen=True)
class AgentConfig:
    """One learning agent: spawn pose or dataset track, spec, sensors."""

    agent_id: str
    spec: ParticipantSpec
    spawn: Optional[tuple[float, float, float, float]] = None  # x, y, heading, speed
    track: Optional[str] = None
    sensors: SensorSuite = SensorSuite()

    def __post_init__(self):
        if not self.agent_id:
            raise ConfigError("agent id must be non-empty")
        if (self.spawn is None) == (self.track is None):
            raise ConfigError(
                f"agent {self.agent_id!r} needs exactly one of spawn or track"
            )


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything reset() needs to build a world."""

    kind: str
    map_source: MapSource
    traffic: Optional[TrafficSource] = None
    agents: tuple[AgentConfig, ...] = ()
    goal: Optional[ConvexPolygon] = None
    dt: float = DEFAULT_DT
    max_steps: int = DEFAULT_MAX_STEPS
    scoring: Optional[str] = None  # defaults to the scenario kind
    signals: Mapping[str, SignalProgram] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ConfigError(
                f"unknown scenario kind {self.kind!r}; expected one of "
                f"{SCENARIO_KINDS}"
            )
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError("dt must be positive")
        if self.max_steps <= 0:
            raise ConfigError("max_steps must be positive")
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ConfigError("agent ids must be unique")

    @property
    def scoring_id(self) -> str:
        return self.scoring if self.scoring is not None else self.kind


def _goal_from_json(points) -> ConvexPolygon:
    try:
        return ConvexPolygon(points)
    except ValueError:
        pass
    try:
        return ConvexPolygon(list(points)[::-1])  # accept CW input
    except ValueError as exc:
        raise ConfigError(f"goal region is not a convex polygon: {exc}") from exc


def _sensor_spec(cls, data: Mapping, what: str):
    names = {f.name for f in dataclasses.fields(cls) if f.name != "palette"}
    _require_keys(data, names, what)
    try:
        return cls(**data)
    except (ConfigError, TypeError) as exc:
        raise ConfigError(f"bad {what} spec: {exc}") from exc


def _agent_from_json(data: Mapping) -> AgentConfig:
    _require_keys(
        data,
        {"id", "class", "spawn", "track", "sensors", "overrides"},
        "agent",
    )
    try:
        spec = ParticipantSpec.for_class(data.get("class", "car"))
        overrides = data.get("overrides", {})
        if overrides:
            spec = dataclasses.replace(spec, **overrides)
    except (ConfigError, TypeError) as exc:
        raise ConfigError(f"bad agent spec: {exc}") from exc
    spawn = None
    if "spawn" in data:
        sp = data["spawn"]
        _require_keys(sp, {"x", "y", "heading", "speed"}, "spawn")
        spawn = (
            float(sp["x"]), float(sp["y"]),
            float(sp.get("heading", 0.0)), float(sp.get("speed", 0.0)),
        )
    suite = SensorSuite()
    if "sensors" in data:
        sensors = data["sensors"]
        _require_keys(sensors, {"bev", "lidar", "vector"}, "sensors")
        suite = SensorSuite(
            bev=_sensor_spec(BevSpec, sensors["bev"], "bev")
            if sensors.get("bev") is not None else None,
            lidar=_sensor_spec(LidarSpec, sensors["lidar"], "lidar")
            if sensors.get("lidar") is not None else None,
            vector=_sensor_spec(VectorSpec, sensors["vector"], "vector")
            if sensors.get("vector") is not None else None,
        )
    return AgentConfig(
        agent_id=data.get("id", ""),
        spec=spec,
        spawn=spawn,
        track=data.get("track"),
        sensors=suite,
    )


def config_from_dict(data: Mapping, base_dir: Optional[Path] = None) -> ScenarioConfig:
    """Build a ScenarioConfig from parsed JSON; paths resolve to base_dir."""
    _require_keys(
        data,
        {"kind", "map", "traffic", "agents", "goal", "dt", "max_steps",
         "scoring", "signals"},
        "scenario",
    )
    if "kind" not in data or "map" not in data:
        raise ConfigError("scenario config needs 'kind' and 'map'")

    def resolve(p: str) -> str:
        path = Path(p)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return str(path)

    m = data["map"]
    _require_keys(m, {"path", "format", "origin"}, "map")
    origin = None
    if "origin" in m:
        origin = (float(m["origin"]["lat"]), float(m["origin"]["lon"]))
    map_source = MapSource(resolve(m["path"]), m.get("format"), origin)

    traffic = None
    if data.get("traffic") is not None:
        t = data["traffic"]
        _require_keys(t, {"path", "schema", "align", "synthetic"}, "traffic")
        alignment = AlignmentSpec()
        if "align" in t:
            al = t["align"]
            _require_keys(al, {"dx", "dy", "dtheta", "dt"}, "align")
            alignment = AlignmentSpec(
                float(al.get("dx", 0.0)), float(al.get("dy", 0.0)),
                float(al.get("dtheta", 0.0)), float(al.get("dt", 0.0)),
            )
        if "synthetic" in t:
            _require_keys(t["synthetic"], {"tracks"}, "synthetic traffic")
            traffic = TrafficSource(synth_tracks=int(t["synthetic"]["tracks"]))
        else:
            traffic = TrafficSource(
                path=resolve(t.get("path", "")), schema=t.get("schema"),
                alignment=alignment,
            )

    signals = {}
    for reg_id, prog in data.get("signals", {}).items():
        _require_keys(prog, {"phases", "offset"}, "signal program")
        signals[reg_id] = SignalProgram(
            tuple((str(c), float(d)) for c, d in prog.get("phases", ())),
            float(prog.get("offset", 0.0)),
        )

    return ScenarioConfig(
        kind=data["kind"],
        map_source=map_source,
        traffic=traffic,
        agents=tuple(_agent_from_json(a) for a in data.get("agents", ())),
        goal=_goal_from_json(data["goal"]) if data.get("goal") else None,
        dt=float(data.get("dt", DEFAULT_DT)),
        max_steps=int(data.get("max_steps", DEFAULT_MAX_STEPS)),
        scoring=data.get("scoring"),
        signals=signals,
    )


def load_scenario(path) -> ScenarioConfig:
    """Read a scenario JSON file; referenced files must exist."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise LoadError(f"cannot read scenario {path}: {exc}", path=str(path)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LoadError(f"invalid JSON in {path}: {exc}", path=str(path)) from exc
    config = config_from_dict(data, base_dir=path.parent)
    for ref in (config.map_source.path,
                config.traffic.path if config.traffic else None):
        if ref is not None and not Path(ref).is_file():
            raise LoadError(f"referenced file does not exist: {ref}", path=ref)
    return config


# ----------------------------------------------------------------------
# scoring registry
# ----------------------------------------------------------------------

_SCORING: dict[str, ScoringFn] = {}


def register_scoring(scoring_id: str, fn: ScoringFn) -> None:
    """Register or replace a scoring function under an id."""
    if not scoring_id:
        raise ConfigError("scoring id must be non-empty")
    if not callable(fn):
        raise ConfigError("scoring function must be callable")
    _SCORING[scoring_id] = fn


def _goal_axis(goal: ConvexPolygon) -> float:
    """Heading of the goal polygon's longest edge (bay orientation)."""
    v = goal.vertices
    best_len, best_axis = -1.0, 0.0
    for i in range(v.shape[0]):
        j = (i + 1) % v.shape[0]
        dx, dy = v[j, 0] - v[i, 0], v[j, 1] - v[i, 1]
        edge = math.hypot(dx, dy)
        if edge > best_len:
            best_len, best_axis = edge, math.atan2(dy, dx)
    return best_axis


def parking_scoring(agent_id, before, after, events) -> float:
    """-(distance to goal center)/10 - folded heading error; +100 on arrival."""
    state = after.states[agent_id]
    reward = 0.0
    goal = after.goals.get(agent_id)
    if goal is not None:
        c = goal.centroid
        pos_err = math.hypot(state.pose.x - c.x, state.pose.y - c.y)
        herr = abs(angle_diff(state.pose.heading, _goal_axis(goal)))
        herr = min(herr, math.pi - herr)  # bays are symmetric end-to-end
        reward = -pos_err / 10.0 - herr
    reward += 100.0 * sum(1 for e in events if e.kind == "route_complete")
    return reward


def racing_scoring(agent_id, before, after, events) -> float:
    """Arc-length progress along the agent's reference path this step."""
    reward = 0.0
    path = after.paths.get(agent_id)
    if path is not None:
        b, a = before.states[agent_id], after.states[agent_id]
        s0, _, _ = project_to_polyline(Point2(b.pose.x, b.pose.y), path)
        s1, _, _ = project_to_polyline(Point2(a.pose.x, a.pose.y), path)
        ds = s1 - s0
        if ds < -0.5 * path.length:  # lap seam crossed forward
            ds += path.length
        elif ds > 0.5 * path.length:
            ds -= path.length
        reward = ds
    reward -= 100.0 * sum(1 for e in events if e.kind == "collision")
    return reward


def cruise_scoring(agent_id, before, after, events) -> float:
    """Speed-keeping base reward minus violation and collision penalties."""
    state = after.states[agent_id]
    limit = DEFAULT_SPEED_LIMIT
    if after.tmap is not None:
        for lane_id in after.tmap.lanes_at_point(
            Point2(state.pose.x, state.pose.y)
        ):
            declared = after.tmap.lanes[lane_id].speed_limit
            if declared:
                limit = declared
                break
    reward = min(max(state.speed / limit, 0.0), 1.0)
    reward -= sum(1 for e in events if e.severity == "violation")
    reward -= 100.0 * sum(1 for e in events if e.kind == "collision")
    return reward


_DEFAULT_SCORING = {
    "parking": parking_scoring,
    "racing": racing_scoring,
    "highway": cruise_scoring,
    "urban": cruise_scoring,
    "roundabout": cruise_scoring,
}


def default_scoring(kind: str) -> ScoringFn:
    """The built-in scoring function for a scenario kind."""
    if kind not in _DEFAULT_SCORING:
        raise ConfigError(f"no default scoring for kind {kind!r}")
    return _DEFAULT_SCORING[kind]


for _kind, _fn in _DEFAULT_SCORING.items():
    register_scoring(_kind, _fn)


# ----------------------------------------------------------------------
# world
# ----------------------------------------------------------------------

@dataclass
class _Participant:
    spec: ParticipantSpec
    state: ParticipantState
    model: Optional[object]  # behavior model; None for learning agents
    path: Optional[Polyline]
    is_agent: bool
    frozen: bool = False


@dataclass(frozen=True)
class StepResult:
    """Per-agent outputs of one step, for agents live at step start."""

    observations: Mapping[str, Mapping[str, Any]]
    rewards: Mapping[str, float]
    terminated: Mapping[str, bool]
    truncated: Mapping[str, bool]
    info: Mapping[str, Any]


class World:
    """Mutable episode state; stepped only through step()."""

    def __init__(self, config: ScenarioConfig, seed: int, tmap: TrafficMap,
                 participants: dict[str, _Participant],
                 sensor_suites: Optional[dict[str, SensorSuite]] = None):
        self.config = config
        self.seed = seed
        self.tmap = tmap
        self.dt = config.dt
        self.participants = participants
        self.sensor_suites = sensor_suites or {}
        self.agent_ids = tuple(
            pid for pid, p in participants.items() if p.is_agent
        )
        self.signal_programs = dict(config.signals)
        self.signal_states = {
            rid: signal_state_at(prog, 0.0)
            for rid, prog in sorted(self.signal_programs.items())
        }
        self.time = 0.0
        self.step_count = 0
        self.detector = DetectorState()
        self.goals = (
            {pid: config.goal for pid in self.agent_ids}
            if config.goal is not None else {}
        )
        self.terminated = {pid: False for pid in self.agent_ids}
        self.truncated = {pid: False for pid in self.agent_ids}
        self.lidar_rng = substream(seed, "lidar")
        self.last_observations: dict[str, Mapping[str, Any]] = {}

    def view(self) -> WorldView:
        return WorldView(
            time=self.time,
            dt=self.dt,
            states={pid: p.state for pid, p in self.participants.items()},
            specs={pid: p.spec for pid, p in self.participants.items()},
            paths={
                pid: p.path for pid, p in self.participants.items()
                if p.path is not None
            },
            tmap=self.tmap,
            observations=self.last_observations,
            goals=self.goals,
        )

    def live_agents(self) -> list[str]:
        return [
            pid for pid in self.agent_ids
            if not (self.terminated[pid] or self.truncated[pid])
        ]


_MAP_CACHE: dict[tuple, TrafficMap] = {}


def load_map(source: MapSource) -> TrafficMap:
    """Parse (or reuse a cached parse of) the referenced map file."""
    path = Path(source.path)
    try:
        stamp = path.stat().st_mtime_ns
        text = path.read_text()
    except OSError as exc:
        raise LoadError(f"cannot read map {path}: {exc}", path=str(path)) from exc
    key = (str(path.resolve()), source.resolved_format, source.origin, stamp)
    if key in _MAP_CACHE:
        return _MAP_CACHE[key]
    try:
        if source.resolved_format == "osm":
            lat, lon = source.origin
            tmap = parse_osm_lanelet2(text, ProjectionSpec(lat, lon))
        else:
            tmap = parse_opendrive(text)
    except Exception as exc:
        raise LoadError(f"cannot parse map {path}: {exc}", path=str(path)) from exc
    _MAP_CACHE[key] = tmap
    return tmap


def _load_traffic(source: TrafficSource, tmap: TrafficMap,
                  seed: int) -> TrajectoryDataset:
    if source.synth_tracks is not None:
        synth_seed = int(substream(seed, "traffic").integers(0, 2**31))
        return synth_fixture(tmap, source.synth_tracks, synth_seed)
    path = Path(source.path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise LoadError(
            f"cannot read dataset {path}: {exc}", path=str(path)
        ) from exc
    try:
        dataset = parse_tracks(source.schema, text)
    except Exception as exc:
        raise LoadError(
            f"cannot parse dataset {path}: {exc}", path=str(path)
        ) from exc
    if source.alignment != AlignmentSpec():
        dataset = align(dataset, source.alignment)
    return dataset


def _spec_for_track(track: Track) -> ParticipantSpec:
    base = ParticipantSpec.for_class(track.participant_class)
    return dataclasses.replace(
        base, length=track.length, width=track.width,
        wheelbase=min(base.wheelbase, 0.6 * track.length),
    )


def _replay_state(track: Track, t: float) -> ParticipantState:
    """Interpolated state, clamped to the track's endpoints outside its span."""
    point = state_at(track, t)
    if point is None:
        point = track.points[0] if t < track.t_first else track.points[-1]
    return ParticipantState(t, point.pose, point.speed)


def _reference_path(tmap: TrafficMap, pose: Pose2) -> Optional[Polyline]:
    """Successor-walk centerline path from the lane under the spawn pose."""
    p = Point2(pose.x, pose.y)
    candidates = tmap.lanes_at_point(p)
    if not candidates:
        return None
    best = None
    for lane_id in candidates:
        lane = tmap.lanes[lane_id]
        s, _, _ = project_to_polyline(p, lane.centerline)
        err = abs(angle_diff(pose.heading, lane_direction_at(lane, s)))
        if best is None or err < best[1]:
            best = (lane_id, err)
    current = best[0]
    visited = [current]
    points = [tmap.lanes[current].centerline.pts]
    for _ in range(REFERENCE_PATH_MAX_LANES):
        successors = sorted(tmap.lanes[current].successors)
        if not successors or successors[0] in visited:
            break
        current = successors[0]
        visited.append(current)
        points.append(tmap.lanes[current].centerline.pts)
    return Polyline.dedupe(np.vstack(points))


def reset(config: ScenarioConfig, seed: int) -> tuple[World, dict]:
    """Build the world for (config, seed) and observe at t = 0."""
    tmap = load_map(config.map_source)
    participants: dict[str, _Participant] = {}

    dataset = None
    if config.traffic is not None:
        dataset = _load_traffic(config.traffic, tmap, seed)
        for track_id in sorted(dataset.tracks):
            track = dataset.tracks[track_id]
            participants[track_id] = _Participant(
                spec=_spec_for_track(track),
                state=_replay_state(track, 0.0),
                model=ReplayModel(track),
                path=None,
                is_agent=False,
            )

    suites: dict[str, SensorSuite] = {}
    for agent in config.agents:
        if agent.track is not None:
            if dataset is None or agent.track not in dataset.tracks:
                raise ConfigError(
                    f"agent {agent.agent_id!r} references unknown track "
                    f"{agent.track!r}"
                )
            participants.pop(agent.track, None)  # the agent takes it over
            state = _replay_state(dataset.tracks[agent.track], 0.0)
        else:
            x, y, heading, speed = agent.spawn
            state = ParticipantState(0.0, Pose2.of(x, y, heading), speed)
        if agent.agent_id in participants:
            raise ConfigError(f"duplicate participant id {agent.agent_id!r}")
        footprint = footprint_of(agent.spec, state)
        for other_id, other in participants.items():
            if footprints_overlap(
                footprint, footprint_of(other.spec, other.state)
            ):
                raise SpawnError(
                    f"agent {agent.agent_id!r} spawn overlaps {other_id!r}"
                )
        participants[agent.agent_id] = _Participant(
            spec=agent.spec,
            state=state,
            model=None,
            path=_reference_path(tmap, state.pose),
            is_agent=True,
        )
        suites[agent.agent_id] = agent.sensors

    world = World(config, seed, tmap, participants, suites)
    observations = _observe(world, world.agent_ids)
    world.last_observations = observations
    return world, observations


def _observe(world: World, agent_ids) -> dict[str, dict[str, Any]]:
    view = world.view()
    out: dict[str, dict[str, Any]] = {}
    for pid in sorted(agent_ids):
        suite = world.sensor_suites.get(pid, SensorSuite())
        bundle: dict[str, Any] = {}
        if suite.bev is not None:
            bundle["bev"] = render_bev(view, pid, suite.bev)
        if suite.lidar is not None:
            rng = world.lidar_rng if suite.lidar.noise_sigma > 0 else None
            bundle["lidar"] = scan_lidar(
                view, pid, suite.lidar, rng=rng, include_map=True
            )
        if suite.vector is not None:
            bundle["vector"] = vectorize(view, pid, suite.vector)
        out[pid] = bundle
    return out


def step(world: World, actions: Mapping[str, Action]) -> StepResult:
    """One fixed-pipeline tick; dead agents are frozen and unrewarded."""
    scoring = _SCORING.get(world.config.scoring_id)
    if scoring is None:
        raise ConfigError(
            f"scoring id {world.config.scoring_id!r} is not registered"
        )
    live = world.live_agents()
    for pid in live:
        if pid not in actions:
            raise ContractError(f"missing action for live agent {pid!r}")
        if not isinstance(actions[pid], Action):
            raise ContractError(f"action for agent {pid!r} is not an Action")

    view_before = world.view()

    decided: dict[str, Action] = {}
    for pid in sorted(world.participants):
        p = world.participants[pid]
        if not p.is_agent and not isinstance(p.model, ReplayModel):
            decided[pid] = behavior_decide(p.model, view_before, pid)

    new_step = world.step_count + 1
    new_time = new_step * world.dt
    for pid in sorted(world.participants):
        p = world.participants[pid]
        if p.frozen:
            continue
        if p.is_agent:
            if pid not in live:
                continue
            moved = step_bicycle(p.state, actions[pid], world.dt, p.spec)
            p.state = dataclasses.replace(moved, time=new_time)
        elif isinstance(p.model, ReplayModel):
            replayed = p.model.state_for(new_time)
            if replayed is None:  # outside the recorded span: hold pose
                replayed = dataclasses.replace(p.state, time=new_time)
            p.state = replayed
        else:
            moved = step_bicycle(p.state, decided[pid], world.dt, p.spec)
            p.state = dataclasses.replace(moved, time=new_time)

    world.step_count = new_step
    world.time = new_time
    for rid, program in world.signal_programs.items():
        world.signal_states[rid] = signal_state_at(program, new_time)

    view_after = world.view()
    events = step_detector(
        view_after, world.tmap, world.signal_states, world.detector,
        world.dt, goals=world.goals, max_steps=world.config.max_steps,
    )

    observations = _observe(world, live)
    rewards: dict[str, float] = {}
    terminated: dict[str, bool] = {}
    truncated: dict[str, bool] = {}
    for pid in live:
        agent_events = [e for e in events if pid in e.participants]
        reward = scoring(pid, view_before, view_after, agent_events)
        if not (isinstance(reward, (int, float)) and math.isfinite(reward)):
            raise ContractError(
                f"scoring {world.config.scoring_id!r} returned non-finite "
                f"reward {reward!r} for agent {pid!r}"
            )
        rewards[pid] = float(reward)
        terminated[pid] = any(
            e.kind in ("collision", "route_complete") for e in agent_events
        )
        truncated[pid] = any(e.kind == "timeout" for e in agent_events)
        if terminated[pid] or truncated[pid]:
            world.terminated[pid] = world.terminated[pid] or terminated[pid]
            world.truncated[pid] = world.truncated[pid] or truncated[pid]
            world.participants[pid].frozen = True

    world.last_observations = observations
    return StepResult(
        observations=observations,
        rewards=rewards,
        terminated=terminated,
        truncated=truncated,
        info={"events": tuple(events), "step": new_step, "time": new_time},
    )


# ----------------------------------------------------------------------
# episode driver and log format
# ----------------------------------------------------------------------

def episode_line(world: World, actions: Mapping[str, Action],
                 result: StepResult) -> str:
    """One JSON-lines record of the step just taken, 9-decimal floats."""
    agents = {}
    for pid in sorted(result.rewards):
        state = world.participants[pid].state
        action = actions[pid]
        agents[pid] = {
            "x": state.pose.x,
            "y": state.pose.y,
            "heading": state.pose.heading,
            "speed": state.speed,
            "action": [action.accel, action.steer],
            "reward": result.rewards[pid],
            "terminated": result.terminated[pid],
        }
    events = [
        {
            "kind": e.kind,
            "severity": e.severity,
            "time": e.time,
            "participants": list(e.participants),
            "detail": e.detail,
        }
        for e in result.info["events"]
    ]
    return jsonfmt.dumps({
        "step": world.step_count,
        "t": world.time,
        "agents": agents,
        "events": events,
    })


@dataclass(frozen=True)
class EpisodeResult:
    """Log lines plus per-agent reward totals of one driven episode."""

    lines: tuple[str, ...]
    totals: Mapping[str, float]
    steps: int


def run_episode(config: ScenarioConfig, seed: int, policy,
                n_steps: int) -> EpisodeResult:
    """Drive n_steps (or until no agent is live) with one policy for all."""
    world, _ = reset(config, seed)
    totals = {pid: 0.0 for pid in world.agent_ids}
    lines = []
    for _ in range(n_steps):
        live = world.live_agents()
        if not live:
            break
        view = world.view()
        actions = {pid: policy.act(view, pid) for pid in sorted(live)}
        result = step(world, actions)
        lines.append(episode_line(world, actions, result))
        for pid, reward in result.rewards.items():
            totals[pid] += reward
    return EpisodeResult(tuple(lines), totals, world.step_count)


def scenario_catalog() -> tuple[dict, ...]:
    """Scenario families with their dataset adapter pairings."""
    return (
        {"family": "highway", "kind": "highway",
         "adapters": ("levelx_like", "interaction_like"),
         "note": "straight multi-lane traffic from drone recordings"},
        {"family": "intersection", "kind": "urban",
         "adapters": ("levelx_like", "interaction_like"),
         "note": "signalized and unsignalized urban junctions"},
        {"family": "roundabout", "kind": "roundabout",
         "adapters": ("levelx_like", "interaction_like"),
         "note": "circulating priority traffic"},
        {"family": "parking_lot", "kind": "parking",
         "adapters": ("generic",),
         "note": "low-speed maneuvering into a goal bay"},
        {"family": "racing", "kind": "racing",
         "adapters": (),
         "note": "map-only closed circuit, no recorded traffic"},
    )
