"""Trajectory ingestion: CSV schema adapters, alignment, interpolation, and
synthetic license-free fixtures.

Adapter families abstract over concrete datasets: map a licensed download
onto one of the column sets below, no dataset bytes ship with the package.

- generic: track_id, t, x, y, heading, speed, class, length, width
- interaction_like: track_id, frame_id, timestamp_ms, agent_type, x, y,
  vx, vy, psi_rad, length, width (speed = hypot(vx, vy))
- levelx_like: track_id, frame, x_center, y_center, length, width, class,
  frame-indexed at 25 Hz; optional heading_deg (degrees), optional
  x_velocity/y_velocity. Missing headings come from position differences
  smoothed over 3 frames; missing speeds from central differences.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
import random
from dataclasses import dataclass
from typing import Mapping, Optional

from .errors import ConfigError, DataError, SchemaError
from .geometry import Polyline, Pose2, normalize_angle
from .map_model import VEHICLE_DRIVABLE_SUBTYPES, TrafficMap

PARTICIPANT_CLASSES = frozenset({"car", "truck", "pedestrian", "cyclist"})
ADAPTERS = ("generic", "interaction_like", "levelx_like")
LEVELX_FRAME_RATE = 25.0
SYNTH_DT = 0.1
SYNTH_SPEED_RANGE = (5.0, 15.0)
SYNTH_VEHICLE = (4.5, 1.8)  # length, width of generated cars

_CLASS_ALIASES = {
    "car": "car",
    "van": "car",
    "truck": "truck",
    "bus": "truck",
    "truck_bus": "truck",
    "trailer": "truck",
    "pedestrian": "pedestrian",
    "person": "pedestrian",
    "cyclist": "cyclist",
    "bicycle": "cyclist",
    "motorcycle": "cyclist",
}


@dataclass(frozen=True)
class TrackPoint:
    """One timestamped state sample of a traffic participant."""

    time: float
    pose: Pose2
    speed: float
    acceleration: Optional[float] = None

    def __post_init__(self):
        if not math.isfinite(self.time):
            raise DataError("track point time must be finite")
        if not (math.isfinite(self.speed) and self.speed >= 0.0):
            raise DataError("track point speed must be finite and non-negative")


@dataclass(frozen=True)
class Track:
    """A participant's recorded trajectory, strictly increasing in time."""

    track_id: str
    participant_class: str
    length: float
    width: float
    points: tuple[TrackPoint, ...]

    def __post_init__(self):
        if self.participant_class not in PARTICIPANT_CLASSES:
            raise DataError(
                f"track {self.track_id}: unknown class {self.participant_class!r}"
            )
        if not self.points:
            raise DataError(f"track {self.track_id}: needs at least one point")
        times = [p.time for p in self.points]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DataError(f"track {self.track_id}: non-monotone time")
        if not (self.length > 0 and self.width > 0):
            raise DataError(f"track {self.track_id}: non-positive dimensions")
        if self.participant_class == "pedestrian" and self.length != self.width:
            raise DataError(
                f"track {self.track_id}: pedestrian length and width must match"
            )
        object.__setattr__(self, "_times", times)

    @property
    def t_first(self) -> float:
        return self.points[0].time

    @property
    def t_last(self) -> float:
        return self.points[-1].time


@dataclass(frozen=True)
class TrajectoryDataset:
    """Id-keyed tracks plus recording metadata."""

    tracks: Mapping[str, Track]
    frame_interval: float
    t_min: float
    t_max: float
    schema: str

    def __post_init__(self):
        for track in self.tracks.values():
            if track.t_first < self.t_min or track.t_last > self.t_max:
                raise DataError(
                    f"track {track.track_id}: outside the dataset time span"
                )

    @property
    def time_span(self) -> tuple[float, float]:
        return (self.t_min, self.t_max)


@dataclass(frozen=True)
class AlignmentSpec:
    """Rigid transform plus a time offset to register data onto a map."""

    dx: float = 0.0
    dy: float = 0.0
    dtheta: float = 0.0
    time_offset: float = 0.0

    def __post_init__(self):
        for v in (self.dx, self.dy, self.dtheta, self.time_offset):
            if not math.isfinite(v):
                raise ConfigError("alignment parameters must be finite")

    def inverse(self) -> "AlignmentSpec":
        cos_t, sin_t = math.cos(-self.dtheta), math.sin(-self.dtheta)
        return AlignmentSpec(
            -(self.dx * cos_t - self.dy * sin_t),
            -(self.dx * sin_t + self.dy * cos_t),
            -self.dtheta,
            -self.time_offset,
        )


def _require_columns(header: list[str], required: tuple[str, ...], schema: str):
    missing = sorted(set(required) - set(header))
    if missing:
        raise SchemaError(f"{schema}: missing required column {missing[0]!r}")


def _float(row: dict, col: str, track_id: str) -> float:
    try:
        v = float(row[col])
    except (TypeError, ValueError):
        raise DataError(f"track {track_id}: unreadable {col!r} value {row[col]!r}")
    if not math.isfinite(v):
        raise DataError(f"track {track_id}: non-finite {col!r}")
    return v


def _participant_class(raw: str, track_id: str) -> str:
    cls = _CLASS_ALIASES.get(raw.strip().lower())
    if cls is None:
        raise DataError(f"track {track_id}: unknown class {raw!r}")
    return cls


def _class_dimensions(cls: str, length: float, width: float) -> tuple[float, float]:
    if cls == "pedestrian":
        d = max(length, width, 0.7)
        return d, d
    return length, width


def _rows(csv_text: str) -> tuple[list[str], list[dict]]:
    reader = csv.DictReader(io.StringIO(csv_text))
    if reader.fieldnames is None:
        raise SchemaError("empty CSV: no header row")
    header = [h.strip() for h in reader.fieldnames]
    reader.fieldnames = header
    return header, list(reader)


def _finish_track(track_id, cls, length, width, points) -> Track:
    points.sort(key=lambda p: p.time)
    return Track(track_id, cls, length, width, tuple(points))


def _dataset(tracks: list[Track], schema: str, frame_interval=None):
    table = {t.track_id: t for t in sorted(tracks, key=lambda t: t.track_id)}
    if frame_interval is None:
        diffs = [
            b.time - a.time
            for t in table.values()
            for a, b in zip(t.points, t.points[1:])
        ]
        frame_interval = min(diffs) if diffs else SYNTH_DT
    t_min = min((t.t_first for t in table.values()), default=0.0)
    t_max = max((t.t_last for t in table.values()), default=0.0)
    return TrajectoryDataset(table, frame_interval, t_min, t_max, schema)


def _parse_generic(csv_text: str) -> TrajectoryDataset:
    header, rows = _rows(csv_text)
    _require_columns(
        header,
        ("track_id", "t", "x", "y", "heading", "speed", "class", "length", "width"),
        "generic",
    )
    grouped: dict[str, list[dict]] = {}
    for row in rows:
        grouped.setdefault(row["track_id"], []).append(row)
    tracks = []
    for tid, track_rows in grouped.items():
        cls = _participant_class(track_rows[0]["class"], tid)
        length, width = _class_dimensions(
            cls, _float(track_rows[0], "length", tid), _float(track_rows[0], "width", tid)
        )
        points = [
            TrackPoint(
                _float(r, "t", tid),
                Pose2.of(_float(r, "x", tid), _float(r, "y", tid),
                         _float(r, "heading", tid)),
                _float(r, "speed", tid),
            )
            for r in track_rows
        ]
        tracks.append(_finish_track(tid, cls, length, width, points))
    return _dataset(tracks, "generic")


def _parse_interaction_like(csv_text: str) -> TrajectoryDataset:
    header, rows = _rows(csv_text)
    _require_columns(
        header,
        ("track_id", "frame_id", "timestamp_ms", "agent_type", "x", "y",
         "vx", "vy", "psi_rad", "length", "width"),
        "interaction_like",
    )
    grouped: dict[str, list[dict]] = {}
    for row in rows:
        grouped.setdefault(row["track_id"], []).append(row)
    tracks = []
    for tid, track_rows in grouped.items():
        cls = _participant_class(track_rows[0]["agent_type"], tid)
        length, width = _class_dimensions(
            cls, _float(track_rows[0], "length", tid), _float(track_rows[0], "width", tid)
        )
        points = [
            TrackPoint(
                _float(r, "timestamp_ms", tid) / 1000.0,
                Pose2.of(_float(r, "x", tid), _float(r, "y", tid),
                         _float(r, "psi_rad", tid)),
                math.hypot(_float(r, "vx", tid), _float(r, "vy", tid)),
            )
            for r in track_rows
        ]
        tracks.append(_finish_track(tid, cls, length, width, points))
    return _dataset(tracks, "interaction_like")


def _parse_levelx_like(csv_text: str) -> TrajectoryDataset:
    header, rows = _rows(csv_text)
    _require_columns(
        header,
        ("track_id", "frame", "x_center", "y_center", "length", "width", "class"),
        "levelx_like",
    )
    has_heading = "heading_deg" in header
    has_velocity = "x_velocity" in header and "y_velocity" in header
    dt = 1.0 / LEVELX_FRAME_RATE
    grouped: dict[str, list[dict]] = {}
    for row in rows:
        grouped.setdefault(row["track_id"], []).append(row)
    tracks = []
    for tid, track_rows in grouped.items():
        track_rows.sort(key=lambda r: _float(r, "frame", tid))
        frames = [_float(r, "frame", tid) for r in track_rows]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise DataError(f"track {tid}: non-monotone time")
        xs = [_float(r, "x_center", tid) for r in track_rows]
        ys = [_float(r, "y_center", tid) for r in track_rows]
        n = len(track_rows)

        def diff(i: int) -> tuple[float, float, float]:
            # Central difference over up to 3 frames; one-sided at the ends.
            a, b = max(0, i - 1), min(n - 1, i + 1)
            if a == b:
                return 0.0, 0.0, dt
            return xs[b] - xs[a], ys[b] - ys[a], (frames[b] - frames[a]) * dt

        headings = []
        for i in range(n):
            if has_heading:
                headings.append(math.radians(_float(track_rows[i], "heading_deg", tid)))
            else:
                dx, dy, _ = diff(i)
                if math.hypot(dx, dy) < 1e-9:
                    headings.append(headings[-1] if headings else 0.0)
                else:
                    headings.append(math.atan2(dy, dx))
        points = []
        for i, row in enumerate(track_rows):
            if has_velocity:
                speed = math.hypot(
                    _float(row, "x_velocity", tid), _float(row, "y_velocity", tid)
                )
            else:
                dx, dy, span = diff(i)
                speed = math.hypot(dx, dy) / span if span > 0 else 0.0
            points.append(
                TrackPoint(frames[i] * dt, Pose2.of(xs[i], ys[i], headings[i]), speed)
            )
        cls = _participant_class(track_rows[0]["class"], tid)
        length, width = _class_dimensions(
            cls, _float(track_rows[0], "length", tid), _float(track_rows[0], "width", tid)
        )
        tracks.append(_finish_track(tid, cls, length, width, points))
    return _dataset(tracks, "levelx_like", frame_interval=dt)


def parse_tracks(schema: str, csv_text: str) -> TrajectoryDataset:
    """Parse a trajectory CSV through the named schema adapter."""
    if schema == "generic":
        return _parse_generic(csv_text)
    if schema == "interaction_like":
        return _parse_interaction_like(csv_text)
    if schema == "levelx_like":
        return _parse_levelx_like(csv_text)
    raise SchemaError(f"unknown adapter {schema!r}; expected one of {ADAPTERS}")


def align(dataset: TrajectoryDataset, spec: AlignmentSpec) -> TrajectoryDataset:
    """Rotate by dtheta about the origin, translate, and shift times."""
    cos_t, sin_t = math.cos(spec.dtheta), math.sin(spec.dtheta)
    tracks = []
    for track in dataset.tracks.values():
        points = tuple(
            TrackPoint(
                p.time + spec.time_offset,
                Pose2.of(
                    p.pose.x * cos_t - p.pose.y * sin_t + spec.dx,
                    p.pose.x * sin_t + p.pose.y * cos_t + spec.dy,
                    p.pose.heading + spec.dtheta,
                ),
                p.speed,
                p.acceleration,
            )
            for p in track.points
        )
        tracks.append(
            Track(track.track_id, track.participant_class, track.length,
                  track.width, points)
        )
    return TrajectoryDataset(
        {t.track_id: t for t in tracks},
        dataset.frame_interval,
        dataset.t_min + spec.time_offset,
        dataset.t_max + spec.time_offset,
        dataset.schema,
    )


def state_at(track: Track, t: float) -> Optional[TrackPoint]:
    """Linearly interpolated state, or None outside the recorded span."""
    times = track._times
    if t < times[0] or t > times[-1]:
        return None
    i = bisect.bisect_left(times, t)
    if i < len(times) and times[i] == t:
        return track.points[i]
    a, b = track.points[i - 1], track.points[i]
    f = (t - a.time) / (b.time - a.time)
    heading = normalize_angle(
        a.pose.heading + f * normalize_angle(b.pose.heading - a.pose.heading)
    )
    accel = None
    if a.acceleration is not None and b.acceleration is not None:
        accel = a.acceleration + f * (b.acceleration - a.acceleration)
    return TrackPoint(
        t,
        Pose2.of(
            a.pose.x + f * (b.pose.x - a.pose.x),
            a.pose.y + f * (b.pose.y - a.pose.y),
            heading,
        ),
        a.speed + f * (b.speed - a.speed),
        accel,
    )


def _route_polyline(tmap: TrafficMap, rng) -> Polyline:
    """Random route along drivable-lane centerlines, concatenated."""
    drivable = sorted(
        lid for lid, lane in tmap.lanes.items()
        if lane.subtype in VEHICLE_DRIVABLE_SUBTYPES
    )
    if not drivable:
        raise ConfigError("map has no drivable lanes to synthesize tracks on")
    lane_id = rng.choice(drivable)
    pts = [tuple(p) for p in tmap.lanes[lane_id].centerline.pts]
    total = tmap.lanes[lane_id].centerline.length
    visited = 1
    while total < 200.0 and visited < 8:
        succ = sorted(
            s for s in tmap.lanes[lane_id].successors
            if tmap.lanes[s].subtype in VEHICLE_DRIVABLE_SUBTYPES
        )
        if not succ:
            break
        lane_id = rng.choice(succ)
        nxt = tmap.lanes[lane_id].centerline
        pts.extend(tuple(p) for p in nxt.pts[1:])
        total += nxt.length
        visited += 1
    return Polyline.dedupe(pts)


def synth_fixture(tmap: TrafficMap, n_tracks: int, seed: int) -> TrajectoryDataset:
    """Constant-speed vehicles on random centerline routes, 0.1 s sampling.

    Tracks sharing a route get one speed and slot positions spaced by more
    than a car length, and all end together, so the generated traffic never
    collides with itself on non-crossing corridors.
    """
    if n_tracks < 0:
        raise ConfigError("n_tracks must be non-negative")
    rng = random.Random(seed)
    length, width = SYNTH_VEHICLE
    margin = length  # keeps the footprint inside the strip, curves included
    spacing = length + 4.0
    routes: dict[tuple, dict] = {}  # start/length key -> placement record
    order = []
    for _ in range(n_tracks):
        placed = None
        for _ in range(32):
            candidate = _route_polyline(tmap, rng)
            key = (
                round(float(candidate.pts[0, 0]), 6),
                round(float(candidate.pts[0, 1]), 6),
                round(candidate.length, 6),
            )
            record = routes.get(key)
            slots = record["slots"] if record else 0
            if candidate.length > 2.0 * margin + (slots + 1) * spacing + 1.0:
                if record is None:
                    record = {
                        "route": candidate,
                        "speed": rng.uniform(*SYNTH_SPEED_RANGE),
                        "slots": 0,
                    }
                    routes[key] = record
                placed = record
                break
        if placed is None:
            raise ConfigError("could not place a track: routes too short")
        order.append((placed, placed["slots"]))
        placed["slots"] += 1

    tracks = []
    for i, (record, slot) in enumerate(order):
        route, speed = record["route"], record["speed"]
        front_s0 = margin + (record["slots"] - 1) * spacing
        duration = min(30.0, (route.length - margin - front_s0) / speed)
        s0 = margin + slot * spacing
        steps = max(1, int(duration / SYNTH_DT))
        points = []
        for k in range(steps + 1):
            t = k * SYNTH_DT
            x, y, heading = route.point_at(s0 + speed * t)
            points.append(TrackPoint(t, Pose2.of(x, y, heading), speed))
        tracks.append(Track(f"synth{i:03d}", "car", length, width, tuple(points)))
    return _dataset(tracks, "synthetic", frame_interval=SYNTH_DT)


def dataset_to_csv(dataset: TrajectoryDataset) -> str:
    """Serialize to the generic schema with fixed 9-decimal formatting."""
    out = ["track_id,t,x,y,heading,speed,class,length,width"]
    for tid in sorted(dataset.tracks):
        track = dataset.tracks[tid]
        for p in track.points:
            out.append(
                f"{tid},{p.time:.9f},{p.pose.x:.9f},{p.pose.y:.9f},"
                f"{p.pose.heading:.9f},{p.speed:.9f},{track.participant_class},"
                f"{track.length:.9f},{track.width:.9f}"
            )
    return "\n".join(out) + "\n"
