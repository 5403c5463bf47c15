"""Traffic-event detection: collisions, rule violations, completion, timeout.

Detectors are edge-triggered: a condition fires once when it begins and not
again until it ends (per participant set and continuous episode). All the
cross-step memory lives in one DetectorState owned by the environment; the
detectors themselves are deterministic functions of (world, map, state).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .agents import WorldView, footprint_of
from .errors import ContractError
from .geometry import (
    Circle,
    ConvexPolygon,
    Point2,
    angle_diff,
    footprints_overlap,
    project_to_polyline,
)
from .map_model import (
    COVERAGE_INSIDE,
    COVERAGE_OUTSIDE,
    COVERAGE_PARTIAL,
    TrafficMap,
    lane_direction_at,
)

EVENT_KINDS = (
    "collision", "off_road", "wrong_way", "red_light_run", "illegal_turn",
    "route_complete", "timeout",
)
SEVERITIES = ("info", "warning", "violation", "fatal")

WRONG_WAY_ANGLE = 2.0 * math.pi / 3.0
WRONG_WAY_DWELL = 2.0  # seconds opposed before the violation fires
DWELL_EPS = 1e-9  # float slack on accumulated dt sums
JUNCTION_ROUTE_DEPTH = 3  # entry junction lane, one more internal, exit

# Road-rule detectors apply to road users; pedestrians only collide.
ROAD_USER_CLASSES = {"car", "truck", "cyclist"}


@dataclass(frozen=True)
class EventRecord:
    """One detected event; severity is implied by the kind."""

    kind: str
    severity: str
    time: float
    participants: tuple[str, ...]
    detail: str

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ContractError(f"unknown event kind {self.kind!r}")
        if self.severity not in SEVERITIES:
            raise ContractError(f"unknown severity {self.severity!r}")
        allowed = {
            "collision": {"fatal"},
            "route_complete": {"info"},
            "timeout": {"info"},
        }.get(self.kind, {"warning", "violation"})
        if self.severity not in allowed:
            raise ContractError(
                f"{self.kind} events cannot be {self.severity}"
            )


@dataclass
class DetectorState:
    """Cross-step detector memory; reset on every environment reset."""

    wrong_way_time: dict[str, float] = field(default_factory=dict)
    wrong_way_lane: dict[str, str] = field(default_factory=dict)
    wrong_way_fired: set[str] = field(default_factory=set)
    stop_side: dict[tuple[str, str], int] = field(default_factory=dict)
    last_pos: dict[str, Point2] = field(default_factory=dict)
    junction_entry: dict[str, tuple[str, ...]] = field(default_factory=dict)
    coverage: dict[str, str] = field(default_factory=dict)
    colliding: set[tuple[str, str]] = field(default_factory=set)
    completed: set[str] = field(default_factory=set)
    timeout_fired: bool = False
    elapsed_steps: int = 0

    def reset(self) -> None:
        self.wrong_way_time.clear()
        self.wrong_way_lane.clear()
        self.wrong_way_fired.clear()
        self.stop_side.clear()
        self.last_pos.clear()
        self.junction_entry.clear()
        self.coverage.clear()
        self.colliding.clear()
        self.completed.clear()
        self.timeout_fired = False
        self.elapsed_steps = 0


def _grid_pairs(view: WorldView) -> list[tuple[str, str]]:
    """Candidate id pairs from a uniform grid; superset of overlapping pairs."""
    radii = {}
    for pid in view.states:
        spec = view.specs[pid]
        radii[pid] = 0.5 * math.hypot(spec.length, spec.width)
    if not radii:
        return []
    if len(radii) <= 24:
        # Under the grid's break-even point a circumradius prefilter is
        # cheaper; like the grid it only prunes, never drops a touching pair
        # (1e-6 slack covers the overlap test's touch tolerance).
        info = [
            (pid, view.states[pid].pose.x, view.states[pid].pose.y, radii[pid])
            for pid in sorted(radii)
        ]
        pairs_small = []
        for i, (a, ax, ay, ar) in enumerate(info):
            for b, bx, by, br in info[i + 1:]:
                reach = ar + br + 1e-6
                if (bx - ax) ** 2 + (by - ay) ** 2 <= reach * reach:
                    pairs_small.append((a, b))
        return pairs_small
    cell = max(1.0, 2.0 * max(radii.values()))
    buckets: dict[tuple[int, int], list[str]] = {}
    for pid in sorted(view.states):
        pose = view.states[pid].pose
        key = (int(math.floor(pose.x / cell)), int(math.floor(pose.y / cell)))
        buckets.setdefault(key, []).append(pid)
    pairs = set()
    for (cx, cy), ids in buckets.items():
        neighborhood = list(ids)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == dy == 0:
                    continue
                neighborhood.extend(buckets.get((cx + dx, cy + dy), ()))
        for a in ids:
            for b in neighborhood:
                if a < b:
                    pairs.add((a, b))
    return sorted(pairs)


def detect_collisions(
    view: WorldView, footprints: Optional[dict] = None
) -> list[EventRecord]:
    """One fatal event per unordered overlapping pair, sorted by ids."""
    if footprints is None:
        footprints = {}
    events = []
    for a, b in _grid_pairs(view):
        for pid in (a, b):
            if pid not in footprints:
                footprints[pid] = footprint_of(view.specs[pid], view.states[pid])
        if footprints_overlap(footprints[a], footprints[b]):
            events.append(
                EventRecord(
                    "collision", "fatal", view.time, (a, b),
                    f"{a} overlaps {b}",
                )
            )
    return events


def detect_off_road(
    view: WorldView, tmap: TrafficMap, det: DetectorState,
    footprints: Optional[dict] = None,
) -> list[EventRecord]:
    """Coverage transitions: entering partial warns, entering outside fires."""
    if footprints is None:
        footprints = {}
    events = []
    for pid in sorted(view.states):
        if view.specs[pid].participant_class not in {"car", "truck"}:
            continue
        fp = footprints.get(pid)
        if fp is None:
            fp = footprint_of(view.specs[pid], view.states[pid])
            footprints[pid] = fp
        if isinstance(fp, Circle):
            continue
        coverage = tmap.footprint_coverage(fp)
        previous = det.coverage.get(pid, COVERAGE_INSIDE)
        det.coverage[pid] = coverage
        if coverage == previous or coverage == COVERAGE_INSIDE:
            continue
        severity = "warning" if coverage == COVERAGE_PARTIAL else "violation"
        events.append(
            EventRecord(
                "off_road", severity, view.time, (pid,),
                f"footprint coverage {coverage}",
            )
        )
    return events


def _best_aligned_lane(
    tmap: TrafficMap, p: Point2, heading: float
) -> Optional[tuple[str, float]]:
    """(lane id, |heading error|) of the best-aligned one-way lane at p."""
    best = None
    for lane_id in tmap.lanes_at_point(p):
        lane = tmap.lanes[lane_id]
        if not lane.one_way:
            continue
        s, _, _ = project_to_polyline(p, lane.centerline)
        err = abs(angle_diff(heading, lane_direction_at(lane, s)))
        if best is None or err < best[1]:
            best = (lane_id, err)
    return best


def detect_wrong_way(
    view: WorldView, tmap: TrafficMap, det: DetectorState, dt: float
) -> list[EventRecord]:
    """Violation after driving against the lane direction for 2 s."""
    events = []
    for pid in sorted(view.states):
        if view.specs[pid].participant_class not in ROAD_USER_CLASSES:
            continue
        state = view.states[pid]
        p = Point2(state.pose.x, state.pose.y)
        best = _best_aligned_lane(tmap, p, state.pose.heading)
        if best is None or best[1] <= WRONG_WAY_ANGLE:
            det.wrong_way_time.pop(pid, None)
            det.wrong_way_lane.pop(pid, None)
            det.wrong_way_fired.discard(pid)
            continue
        lane_id = best[0]
        if det.wrong_way_lane.get(pid) == lane_id:
            det.wrong_way_time[pid] += dt
        else:
            det.wrong_way_lane[pid] = lane_id
            det.wrong_way_time[pid] = dt
            det.wrong_way_fired.discard(pid)
        accumulated = det.wrong_way_time[pid]
        if (accumulated >= WRONG_WAY_DWELL - DWELL_EPS
                and pid not in det.wrong_way_fired):
            det.wrong_way_fired.add(pid)
            events.append(
                EventRecord(
                    "wrong_way", "violation", view.time, (pid,),
                    f"opposed to lane {lane_id} for {accumulated:.1f} s",
                )
            )
    return events


def _side_of_line(a: Point2, b: Point2, p: Point2) -> int:
    cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
    if cross > 0.0:
        return 1
    if cross < 0.0:
        return -1
    return 0


def _segments_cross(p0, p1, q0, q1) -> bool:
    """Inclusive segment intersection via orientation signs."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q0, q1, p0)
    d2 = orient(q0, q1, p1)
    d3 = orient(p0, p1, q0)
    d4 = orient(p0, p1, q1)
    if ((d1 > 0) != (d2 > 0) or d1 == 0 or d2 == 0) and (
        (d3 > 0) != (d4 > 0) or d3 == 0 or d4 == 0
    ):
        # Degenerate (collinear touching) cases resolve by bounding boxes.
        if d1 == d2 == d3 == d4 == 0:
            return (
                min(p0[0], p1[0]) <= max(q0[0], q1[0])
                and min(q0[0], q1[0]) <= max(p0[0], p1[0])
                and min(p0[1], p1[1]) <= max(q0[1], q1[1])
                and min(q0[1], q1[1]) <= max(p0[1], p1[1])
            )
        return True
    return False


def detect_red_light(
    view: WorldView,
    tmap: TrafficMap,
    signals: Mapping[str, str],
    det: DetectorState,
) -> list[EventRecord]:
    """Violation when a rear axle crosses a red group's stop line."""
    if not tmap.regulatory:
        return []
    events = []
    groups = [
        (reg_id, reg)
        for reg_id, reg in sorted(tmap.regulatory.items())
        if reg.kind == "traffic_light_group" and reg.stop_line is not None
    ]
    for pid in sorted(view.states):
        if view.specs[pid].participant_class not in ROAD_USER_CLASSES:
            continue
        pos = Point2(view.states[pid].pose.x, view.states[pid].pose.y)
        prev_pos = det.last_pos.get(pid)
        for reg_id, reg in groups:
            line = tmap.linestrings[reg.stop_line].geometry
            a = Point2(line.pts[0, 0], line.pts[0, 1])
            b = Point2(line.pts[-1, 0], line.pts[-1, 1])
            side = _side_of_line(a, b, pos)
            key = (pid, reg.stop_line)
            prev_side = det.stop_side.get(key)
            if side != 0:
                det.stop_side[key] = side
            if prev_pos is None or prev_side is None or side == 0:
                continue
            if side == prev_side:
                continue
            crossed = any(
                _segments_cross(
                    (prev_pos.x, prev_pos.y), (pos.x, pos.y),
                    tuple(line.pts[i]), tuple(line.pts[i + 1]),
                )
                for i in range(line.pts.shape[0] - 1)
            )
            if crossed and signals.get(reg_id) == "red":
                events.append(
                    EventRecord(
                        "red_light_run", "violation", view.time, (pid,),
                        f"crossed stop line {reg.stop_line} of {reg_id} on red",
                    )
                )
    for pid in sorted(view.states):
        state = view.states[pid]
        det.last_pos[pid] = Point2(state.pose.x, state.pose.y)
    return events


def detect_illegal_turn(
    view: WorldView, tmap: TrafficMap, det: DetectorState
) -> list[EventRecord]:
    """Junction exits must be reachable from the recorded entry lane."""
    if not tmap._has_junction_lanes:
        return []
    events = []
    for pid in sorted(view.states):
        if view.specs[pid].participant_class not in ROAD_USER_CLASSES:
            continue
        state = view.states[pid]
        lane_ids = tmap.lanes_at_point(Point2(state.pose.x, state.pose.y))
        junction = [i for i in lane_ids if tmap.lanes[i].in_junction]
        outside = [i for i in lane_ids if not tmap.lanes[i].in_junction]
        if junction and pid not in det.junction_entry:
            # Overlapping turn corridors share the approach area; any of
            # them counts as the entered lane until the exit disambiguates.
            det.junction_entry[pid] = tuple(junction)
        elif not junction and outside and pid in det.junction_entry:
            entries = det.junction_entry.pop(pid)
            exit_lane = outside[0]
            legal = any(
                (route := tmap.route(entry, exit_lane)) is not None
                and len(route) <= JUNCTION_ROUTE_DEPTH
                for entry in entries
            )
            if not legal:
                events.append(
                    EventRecord(
                        "illegal_turn", "violation", view.time, (pid,),
                        f"no legal route {'/'.join(entries)} -> {exit_lane}",
                    )
                )
    return events


def step_detector(
    view: WorldView,
    tmap: Optional[TrafficMap],
    signals: Mapping[str, str],
    det: DetectorState,
    dt: float,
    goals: Optional[Mapping[str, ConvexPolygon]] = None,
    max_steps: Optional[int] = None,
) -> list[EventRecord]:
    """All detectors in fixed order; edge semantics applied via det."""
    det.elapsed_steps += 1
    events = []
    footprints: dict = {}  # shared per-step cache across detectors

    current = detect_collisions(view, footprints)
    pairs_now = set()
    for ev in current:
        pair = ev.participants
        pairs_now.add(pair)
        if pair not in det.colliding:
            events.append(ev)
    det.colliding = pairs_now

    if tmap is not None:
        events.extend(detect_off_road(view, tmap, det, footprints))
        events.extend(detect_wrong_way(view, tmap, det, dt))
        events.extend(detect_red_light(view, tmap, signals, det))
        events.extend(detect_illegal_turn(view, tmap, det))

    if goals:
        for pid in sorted(goals):
            if pid not in view.states or pid in det.completed:
                continue
            pose = view.states[pid].pose
            if goals[pid].contains(Point2(pose.x, pose.y)):
                det.completed.add(pid)
                events.append(
                    EventRecord(
                        "route_complete", "info", view.time, (pid,),
                        "reached goal region",
                    )
                )

    if (max_steps is not None and det.elapsed_steps >= max_steps
            and not det.timeout_fired):
        det.timeout_fired = True
        events.append(
            EventRecord(
                "timeout", "info", view.time, tuple(sorted(view.states)),
                "step limit reached",
            )
        )
    return events
