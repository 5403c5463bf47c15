"""Participants: specs, kinematics, behavior models, signal programs.

Behavior models share one interface: decide(view, participant_id) -> Action.
Replay participants are teleported to interpolated dataset states by the
caller (exact fidelity matters more than dynamics); they still take part in
collision checks. Rule-based participants compose IDM car-following with
pure-pursuit lane keeping. The external model forwards to a user-registered
policy function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

from . import kernels
from .errors import ConfigError, ContractError
from .geometry import (
    Circle,
    ConvexPolygon,
    Footprint,
    OrientedBox,
    Point2,
    Polyline,
    Pose2,
    normalize_angle,
    project_to_polyline,
)
from .map_model import TrafficMap
from .traffic_data import Track, state_at

SUBSTEPS = 10  # forward-Euler sub-steps per environment step
LEADER_HORIZON = 100.0  # meters of centerline searched for a leader
LANE_CORRIDOR = 2.5  # meters of lateral offset still counted as "same lane"
SIGNAL_COLORS = ("red", "yellow", "green")

_CLASS_DEFAULTS = {
    # length, width, wheelbase, max_speed, max_accel, max_decel, max_steer
    "car": (4.5, 1.8, 2.7, 55.0, 3.0, 8.0, 0.6),
    "truck": (10.0, 2.5, 6.0, 30.0, 1.5, 6.0, 0.5),
    "pedestrian": (0.7, 0.7, 0.4, 2.5, 1.0, 2.0, 1.5),
    "cyclist": (1.8, 0.6, 1.1, 10.0, 1.5, 4.0, 1.0),
}


@dataclass(frozen=True)
class ParticipantSpec:
    """Physical limits of one traffic participant."""

    participant_class: str
    length: float
    width: float
    wheelbase: float
    max_speed: float
    max_accel: float
    max_decel: float  # positive magnitude
    max_steer: float

    def __post_init__(self):
        values = (self.length, self.width, self.wheelbase, self.max_speed,
                  self.max_accel, self.max_decel, self.max_steer)
        if any(not (math.isfinite(v) and v > 0) for v in values):
            raise ConfigError("participant spec values must be positive")
        if self.wheelbase >= self.length:
            raise ConfigError("wheelbase must be shorter than the body")

    @classmethod
    def for_class(cls, participant_class: str) -> "ParticipantSpec":
        if participant_class not in _CLASS_DEFAULTS:
            raise ConfigError(f"unknown participant class {participant_class!r}")
        return cls(participant_class, *_CLASS_DEFAULTS[participant_class])


@dataclass(frozen=True)
class ParticipantState:
    """Kinematic state at one instant."""

    time: float
    pose: Pose2
    speed: float
    accel: float = 0.0
    steer: float = 0.0


@dataclass(frozen=True)
class Action:
    """Control command; clamped to spec limits on application."""

    accel: float = 0.0
    steer: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.accel) and math.isfinite(self.steer)):
            raise ConfigError("action commands must be finite")


@dataclass(frozen=True)
class IdmParams:
    """Intelligent-driver-model parameters."""

    v0: float = 13.9  # desired speed
    T: float = 1.5  # time headway
    s0: float = 2.0  # minimum gap
    a: float = 2.0  # max acceleration
    b: float = 2.0  # comfortable deceleration
    delta: float = 4.0

    def __post_init__(self):
        values = (self.v0, self.T, self.s0, self.a, self.b, self.delta)
        if any(not (math.isfinite(v) and v > 0) for v in values):
            raise ConfigError("IDM parameters must be positive")


@dataclass(frozen=True)
class SignalProgram:
    """Cyclic traffic-light program."""

    phases: tuple[tuple[str, float], ...]
    offset: float = 0.0

    def __post_init__(self):
        if not self.phases:
            raise ConfigError("signal program needs at least one phase")
        for color, duration in self.phases:
            if color not in SIGNAL_COLORS:
                raise ConfigError(f"unknown signal color {color!r}")
            if not (math.isfinite(duration) and duration > 0):
                raise ConfigError("phase durations must be positive")

    @property
    def cycle(self) -> float:
        return sum(d for _, d in self.phases)


def signal_state_at(program: SignalProgram, t: float) -> str:
    """Color of the phase containing t; phases are half-open [start, end)."""
    e = (t - program.offset) % program.cycle
    start = 0.0
    for color, duration in program.phases:
        if start <= e < start + duration:
            return color
        start += duration
    return program.phases[-1][0]  # only reachable through rounding at cycle end


def footprint_of(spec: ParticipantSpec, state: ParticipantState) -> Footprint:
    """Collision/sensor footprint: disc for pedestrians, box for the rest."""
    if spec.participant_class == "pedestrian":
        return Circle(Point2(state.pose.x, state.pose.y), spec.length / 2.0)
    return OrientedBox(state.pose, spec.length, spec.width).to_polygon()


def step_bicycle(
    state: ParticipantState, action: Action, dt: float, spec: ParticipantSpec
) -> ParticipantState:
    """Rear-axle kinematic bicycle, forward Euler with dt/10 sub-steps."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    accel = min(max(action.accel, -spec.max_decel), spec.max_accel)
    steer = min(max(action.steer, -spec.max_steer), spec.max_steer)
    x, y, heading, speed = kernels.bicycle_step(
        state.pose.x, state.pose.y, state.pose.heading, state.speed,
        accel, steer, dt, SUBSTEPS, spec.wheelbase, spec.max_speed,
    )
    return ParticipantState(
        state.time + dt, Pose2.of(x, y, heading), speed, accel, steer
    )


def idm_accel(v: float, gap: float, closing_speed: float, params: IdmParams) -> float:
    """IDM acceleration; gap may be +inf for a free road."""
    free = 1.0 - (v / params.v0) ** params.delta
    if math.isinf(gap):
        interaction = 0.0
    else:
        s_star = params.s0 + v * params.T + (
            v * closing_speed / (2.0 * math.sqrt(params.a * params.b))
        )
        if s_star < params.s0:
            s_star = params.s0
        interaction = (s_star / gap) ** 2
    raw = params.a * (free - interaction)
    return min(max(raw, -2.0 * params.b), params.a)


def pure_pursuit_steer(
    pose: Pose2, path: Polyline, lookahead: float, wheelbase: float
) -> float:
    """Steer angle toward the path point lookahead meters ahead by arc length."""
    if lookahead <= 0:
        raise ValueError("lookahead must be positive")
    if path is None or path.length <= 0.0:
        raise ConfigError("pure pursuit needs a non-empty path")
    s, _, _ = project_to_polyline(Point2(pose.x, pose.y), path)
    tx, ty, _ = path.point_at(min(s + lookahead, path.length))
    alpha = normalize_angle(math.atan2(ty - pose.y, tx - pose.x) - pose.heading)
    return math.atan(2.0 * wheelbase * math.sin(alpha) / lookahead)


@dataclass(frozen=True)
class WorldView:
    """Read-only snapshot handed to behavior models each step."""

    time: float
    dt: float
    states: Mapping[str, ParticipantState]
    specs: Mapping[str, ParticipantSpec]
    paths: Mapping[str, Polyline]
    tmap: Optional[TrafficMap] = None
    observations: Mapping[str, Any] = field(default_factory=dict)
    goals: Mapping[str, ConvexPolygon] = field(default_factory=dict)


class ReplayModel:
    """Teleports along a recorded track; the env applies states directly."""

    def __init__(self, track: Track):
        self.track = track

    def state_for(self, t: float) -> Optional[ParticipantState]:
        point = state_at(self.track, t)
        if point is None:
            return None
        return ParticipantState(t, point.pose, point.speed)

    def decide(self, view: WorldView, pid: str) -> Action:
        return Action(0.0, 0.0)


class RuleBasedModel:
    """IDM car-following along the participant's path + pure-pursuit steering."""

    def __init__(self, idm: IdmParams = IdmParams(), lookahead: float = 8.0):
        self.idm = idm
        self.lookahead = lookahead

    def _leader_gap(self, view: WorldView, pid: str) -> tuple[float, float]:
        """(bumper gap, closing speed) to the nearest same-corridor leader."""
        path = view.paths[pid]
        me = view.states[pid]
        s_self, _, _ = project_to_polyline(Point2(me.pose.x, me.pose.y), path)
        best_gap = math.inf
        closing = 0.0
        for other_id, other in view.states.items():
            if other_id == pid:
                continue
            s, d, _ = project_to_polyline(
                Point2(other.pose.x, other.pose.y), path
            )
            if abs(d) > LANE_CORRIDOR:
                continue
            ahead = s - s_self
            if ahead <= 0.0 or ahead > LEADER_HORIZON:
                continue
            gap = ahead - 0.5 * (
                view.specs[pid].length + view.specs[other_id].length
            )
            if gap < best_gap:
                best_gap = gap
                closing = me.speed - other.speed
        return best_gap, closing

    def decide(self, view: WorldView, pid: str) -> Action:
        me = view.states[pid]
        spec = view.specs[pid]
        gap, closing = self._leader_gap(view, pid)
        if gap <= 0.0:  # overlapping bumpers: brake as hard as allowed
            accel = -spec.max_decel
        else:
            accel = idm_accel(me.speed, gap, closing, self.idm)
        steer = pure_pursuit_steer(
            me.pose, view.paths[pid], self.lookahead, spec.wheelbase
        )
        return Action(accel, steer)


class ExternalPolicyModel:
    """Forwards decisions to a caller-registered observation -> Action hook."""

    def __init__(self, policy: Optional[Callable[[Any], Action]] = None):
        self.policy = policy

    def decide(self, view: WorldView, pid: str) -> Action:
        if self.policy is None:
            raise ConfigError(
                f"participant {pid!r} uses an external policy but none is set"
            )
        action = self.policy(view.observations.get(pid))
        if not isinstance(action, Action):
            raise ConfigError("external policy must return an Action")
        return action


def behavior_decide(model, view: WorldView, pid: str) -> Action:
    """Ask a behavior model for this participant's next action."""
    if pid not in view.states:
        raise ContractError(f"unknown participant {pid!r}")
    return model.decide(view, pid)
