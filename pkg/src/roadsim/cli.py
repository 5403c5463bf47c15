"""Operator command line: map checks, dataset audits, runs, frames, bench.

Exit codes are uniform across subcommands: 0 success, 1 I/O failure,
2 validation or usage failure. File outputs are byte-identical for
identical inputs and seed; wall-clock timings go to stdout only.
"""

import argparse
import dataclasses
import re
import sys
import time
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .agents import Action, ParticipantState, SignalProgram, WorldView, signal_state_at
from .env import (
    SensorSuite,
    _spec_for_track,
    load_scenario,
    reset,
    run_episode,
    step,
    substream,
)
from .errors import LoadError, MalformedMapError, RoadSimError
from .events import DetectorState, step_detector
from .geometry import Polyline
from .jsonfmt import dumps as json_dumps
from .jsonfmt import format_float
from .map_model import AreaRegion, Lane, Linestring, RegulatoryElement, TrafficMap
from .map_parsers import ProjectionSpec, parse_opendrive, parse_osm_lanelet2
from .policies import POLICY_NAMES, make_policy
from .sensors import BEV_CLASSES, BevSpec
from .traffic_data import (
    AlignmentSpec,
    TrajectoryDataset,
    align,
    parse_tracks,
    state_at,
)

# Composite frame colors, one per BEV class, painted in channel order.
CHANNEL_COLORS = {
    "drivable": (80, 80, 80),
    "lane_marking": (255, 255, 255),
    "vehicle": (0, 90, 200),
    "pedestrian_cyclist": (230, 60, 60),
    "ego": (0, 200, 90),
    "area": (160, 120, 40),
}


# ---------------------------------------------------------------------------
# Map JSON dump


def map_to_json(tmap: TrafficMap) -> dict:
    """Plain-data form of a TrafficMap; ids sorted, floats left as floats."""
    linestrings = {}
    for lid in sorted(tmap.linestrings):
        ls = tmap.linestrings[lid]
        linestrings[lid] = {
            "geometry": [[float(x), float(y)] for x, y in ls.geometry.pts],
            "tags": {k: ls.tags[k] for k in sorted(ls.tags)},
        }
    lanes = {}
    for lid in sorted(tmap.lanes):
        ln = tmap.lanes[lid]
        lanes[lid] = {
            "left_boundary": ln.left_boundary,
            "right_boundary": ln.right_boundary,
            "centerline": [[float(x), float(y)] for x, y in ln.centerline.pts],
            "subtype": ln.subtype,
            "one_way": ln.one_way,
            "speed_limit": ln.speed_limit,
            "successors": list(ln.successors),
            "adjacent_left": ln.adjacent_left,
            "adjacent_right": ln.adjacent_right,
            "in_junction": ln.in_junction,
        }
    areas = {}
    for aid in sorted(tmap.areas):
        ar = tmap.areas[aid]
        areas[aid] = {
            "ring": [[float(x), float(y)] for x, y in ar.ring],
            "subtype": ar.subtype,
        }
    regulatory = {}
    for rid in sorted(tmap.regulatory):
        reg = tmap.regulatory[rid]
        regulatory[rid] = {
            "kind": reg.kind,
            "governed_lanes": list(reg.governed_lanes),
            "stop_line": reg.stop_line,
            "parameters": {k: reg.parameters[k] for k in sorted(reg.parameters)},
        }
    return {
        "linestrings": linestrings,
        "lanes": lanes,
        "areas": areas,
        "regulatory": regulatory,
        "warnings": list(tmap.warnings),
    }


def map_from_json(data: Mapping) -> TrafficMap:
    """Rebuild a TrafficMap from map_to_json output."""
    linestrings = [
        Linestring(lid, Polyline(item["geometry"]), dict(item["tags"]))
        for lid, item in data["linestrings"].items()
    ]
    lanes = [
        Lane(
            id=lid,
            left_boundary=item["left_boundary"],
            right_boundary=item["right_boundary"],
            centerline=Polyline(item["centerline"]),
            subtype=item["subtype"],
            one_way=item["one_way"],
            speed_limit=item["speed_limit"],
            successors=tuple(item["successors"]),
            adjacent_left=item["adjacent_left"],
            adjacent_right=item["adjacent_right"],
            in_junction=item["in_junction"],
        )
        for lid, item in data["lanes"].items()
    ]
    areas = [
        AreaRegion(aid, np.asarray(item["ring"], dtype=np.float64), item["subtype"])
        for aid, item in data["areas"].items()
    ]
    regulatory = [
        RegulatoryElement(
            id=rid,
            kind=item["kind"],
            governed_lanes=tuple(item["governed_lanes"]),
            stop_line=item["stop_line"],
            parameters=dict(item["parameters"]),
        )
        for rid, item in data["regulatory"].items()
    ]
    return TrafficMap(
        linestrings=linestrings,
        lanes=lanes,
        areas=areas,
        regulatory=regulatory,
        warnings=tuple(data["warnings"]),
    )


# ---------------------------------------------------------------------------
# Replay audit


@dataclasses.dataclass(frozen=True)
class AuditReport:
    """Per-track and total event counts from replaying a dataset."""

    per_track: Mapping[str, Mapping[str, Mapping[str, int]]]
    totals: Mapping[str, Mapping[str, int]]
    steps: int
    duration_s: float

    def to_json(self) -> dict:
        # duration_s stays out of the file so identical inputs give
        # byte-identical reports.
        return {
            "steps": self.steps,
            "tracks": {
                tid: {
                    "by_kind": dict(counts["by_kind"]),
                    "by_severity": dict(counts["by_severity"]),
                }
                for tid, counts in self.per_track.items()
            },
            "totals": {
                "by_kind": dict(self.totals["by_kind"]),
                "by_severity": dict(self.totals["by_severity"]),
            },
        }


def audit_replay(
    tmap: TrafficMap,
    dataset: TrajectoryDataset,
    signal_programs: Optional[Mapping[str, SignalProgram]] = None,
) -> AuditReport:
    """Replay every track through the event detector at recorded frames.

    A track participates only between its first and last recorded times;
    frame times are the union of all recorded timestamps.
    """
    started = time.perf_counter()
    programs = dict(signal_programs or {})
    tracks = dataset.tracks
    specs = {tid: _spec_for_track(tr) for tid, tr in tracks.items()}
    times = sorted({p.time for tr in tracks.values() for p in tr.points})

    det = DetectorState()
    per_track = {
        tid: {"by_kind": {}, "by_severity": {}} for tid in sorted(tracks)
    }
    prev_t = times[0] if times else 0.0
    for t in times:
        states = {}
        for tid in sorted(tracks):
            point = state_at(tracks[tid], t)
            if point is not None:
                states[tid] = ParticipantState(t, point.pose, point.speed)
        dt = t - prev_t if t > prev_t else dataset.frame_interval
        view = WorldView(
            time=t, dt=dt, states=states,
            specs={tid: specs[tid] for tid in states}, paths={}, tmap=tmap,
        )
        signals = {
            rid: signal_state_at(prog, t) for rid, prog in sorted(programs.items())
        }
        for event in step_detector(view, tmap, signals, det, dt):
            for pid in event.participants:
                counts = per_track[pid]
                counts["by_kind"][event.kind] = (
                    counts["by_kind"].get(event.kind, 0) + 1
                )
                counts["by_severity"][event.severity] = (
                    counts["by_severity"].get(event.severity, 0) + 1
                )
        prev_t = t

    totals = {"by_kind": {}, "by_severity": {}}
    for counts in per_track.values():
        for table in ("by_kind", "by_severity"):
            for key, n in counts[table].items():
                totals[table][key] = totals[table].get(key, 0) + n
    for counts in per_track.values():
        for table in ("by_kind", "by_severity"):
            counts[table] = dict(sorted(counts[table].items()))
    totals = {table: dict(sorted(totals[table].items())) for table in totals}
    return AuditReport(
        per_track=per_track,
        totals=totals,
        steps=len(times),
        duration_s=time.perf_counter() - started,
    )


# ---------------------------------------------------------------------------
# Frame export


def _write_pgm(path: Path, plane: np.ndarray) -> None:
    h, w = plane.shape
    payload = (plane.astype(np.uint8) * 255).tobytes()
    path.write_bytes(f"P5 {w} {h} 255\n".encode("ascii") + payload)


def _write_ppm(path: Path, grid: np.ndarray, spec: BevSpec) -> None:
    h, w, _ = grid.shape
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    for name in sorted(spec.palette, key=spec.palette.get):
        mask = grid[:, :, spec.palette[name]] == 1
        rgb[mask] = CHANNEL_COLORS[name]
    path.write_bytes(f"P6 {w} {h} 255\n".encode("ascii") + rgb.tobytes())


def _export_frame(out_dir: Path, index: int, grid: np.ndarray,
                  spec: BevSpec) -> None:
    stem = f"frame_{index:05d}"
    _write_ppm(out_dir / f"{stem}.ppm", grid, spec)
    for name in sorted(spec.palette, key=spec.palette.get):
        plane = grid[:, :, spec.palette[name]]
        _write_pgm(out_dir / f"{stem}_{name}.pgm", plane)


# ---------------------------------------------------------------------------
# Argument parsing helpers


def _parse_origin(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError("origin must be lat,lon")
    return (float(parts[0]), float(parts[1]))


def _parse_align(text: str) -> AlignmentSpec:
    parts = text.split(",")
    if len(parts) != 4:
        raise ValueError("align must be dx,dy,dtheta,dt")
    dx, dy, dtheta, dt = (float(p) for p in parts)
    return AlignmentSpec(dx=dx, dy=dy, dtheta=dtheta, time_offset=dt)


def _parse_bev(text: str) -> BevSpec:
    match = re.fullmatch(r"(\d+)x(\d+),([0-9.eE+-]+)", text)
    if not match:
        raise ValueError("bev must be WxH,res (e.g. 128x128,0.5)")
    return BevSpec(
        width_px=int(match.group(1)),
        height_px=int(match.group(2)),
        resolution=float(match.group(3)),
    )


def _infer_format(path: Path, explicit: Optional[str]) -> str:
    if explicit:
        return explicit
    suffix = path.suffix.lower().lstrip(".")
    if suffix in ("osm", "xodr"):
        return suffix
    raise ValueError(
        f"cannot infer map format from {path.name!r}; pass --format"
    )


def _default_osm_origin(text: str) -> tuple[float, float]:
    """First node's coordinates; (0,0) when the document has none."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError:
        return (0.0, 0.0)
    for node in root.iter("node"):
        lat, lon = node.get("lat"), node.get("lon")
        if lat is not None and lon is not None:
            return (float(lat), float(lon))
    return (0.0, 0.0)


def _parse_map_file(path: Path, fmt: Optional[str],
                    origin: Optional[tuple[float, float]]) -> TrafficMap:
    """Shared map loading for validate-map and replay; raises, never exits."""
    text = path.read_text()
    resolved = _infer_format(path, fmt)
    if resolved == "osm":
        lat, lon = origin if origin is not None else _default_osm_origin(text)
        return parse_osm_lanelet2(text, ProjectionSpec(lat, lon))
    return parse_opendrive(text)


def _load_signal_programs(path: Path) -> dict[str, SignalProgram]:
    import json

    data = json.loads(path.read_text())
    programs = {}
    for rid, prog in data.items():
        programs[rid] = SignalProgram(
            phases=tuple((color, float(dur)) for color, dur in prog["phases"]),
            offset=float(prog.get("offset", 0.0)),
        )
    return programs


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_validate_map(args: argparse.Namespace) -> int:
    path = Path(args.file)
    try:
        tmap = _parse_map_file(path, args.format, args.origin)
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return 1
    except MalformedMapError as exc:
        element = f" (element {exc.element_id})" if exc.element_id else ""
        print(f"error: malformed map: {exc}{element}", file=sys.stderr)
        return 2
    except (RoadSimError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"lanes: {len(tmap.lanes)}")
    print(f"linestrings: {len(tmap.linestrings)}")
    print(f"areas: {len(tmap.areas)}")
    print(f"regulatory: {len(tmap.regulatory)}")
    print(f"warnings: {len(tmap.warnings)}")
    for warning in tmap.warnings:
        print(f"  warning: {warning}")
    if args.dump:
        try:
            Path(args.dump).write_text(json_dumps(map_to_json(tmap)) + "\n")
        except OSError as exc:
            print(f"error: cannot write {args.dump}: {exc}", file=sys.stderr)
            return 1
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    tmap = _parse_map_file(Path(args.map), args.format, args.origin)
    csv_text = Path(args.tracks).read_text()
    dataset = parse_tracks(args.schema, csv_text)
    if args.align is not None:
        dataset = align(dataset, args.align)
    programs = (
        _load_signal_programs(Path(args.signals)) if args.signals else None
    )
    report = audit_replay(tmap, dataset, programs)
    Path(args.out).write_text(json_dumps(report.to_json()) + "\n")
    print(f"tracks: {len(dataset.tracks)}")
    print(f"steps: {report.steps}")
    for kind in sorted(report.totals["by_kind"]):
        print(f"{kind}: {report.totals['by_kind'][kind]}")
    print(f"duration_s: {report.duration_s:.3f}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_scenario(args.scenario)
    if args.steps is not None:
        config = dataclasses.replace(config, max_steps=args.steps)
    rng = substream(args.seed, "policy") if args.policy == "random" else None
    policy = make_policy(args.policy, rng)
    result = run_episode(config, args.seed, policy, config.max_steps)
    Path(args.log).write_text("".join(line + "\n" for line in result.lines))
    print(f"steps: {result.steps}")
    for pid in sorted(result.totals):
        print(f"reward {pid}: {format_float(result.totals[pid])}")
    return 0


def _cmd_export_frames(args: argparse.Namespace) -> int:
    config = load_scenario(args.scenario)
    config = dataclasses.replace(
        config, max_steps=max(config.max_steps, args.steps)
    )
    agent_id = sorted(cfg.agent_id for cfg in config.agents)[0]
    agents = tuple(
        dataclasses.replace(cfg, sensors=SensorSuite(bev=args.bev))
        if cfg.agent_id == agent_id else cfg
        for cfg in config.agents
    )
    config = dataclasses.replace(config, agents=agents)

    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        print(f"error: cannot write to {out_dir}: {exc}", file=sys.stderr)
        return 1

    world, observations = reset(config, args.seed)
    written = 0
    for index in range(args.steps):
        if index > 0:
            actions = {pid: Action(0.0, 0.0) for pid in world.live_agents()}
            observations = step(world, actions).observations
        if agent_id not in observations:
            break
        _export_frame(out_dir, index, observations[agent_id]["bev"], args.bev)
        written += 1
    print(f"frames: {written}")
    print(f"out: {out_dir}")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    if args.steps <= 0:
        print("error: --steps must be positive", file=sys.stderr)
        return 2
    config = load_scenario(args.scenario)
    config = dataclasses.replace(
        config, max_steps=max(config.max_steps, args.steps)
    )
    world, _ = reset(config, args.seed)
    latencies = np.empty(args.steps, dtype=np.float64)
    for i in range(args.steps):
        actions = {pid: Action(0.0, 0.0) for pid in world.live_agents()}
        started = time.perf_counter()
        step(world, actions)
        latencies[i] = time.perf_counter() - started
    total = float(latencies.sum())
    print(f"steps: {args.steps}")
    print(f"mean_step_ms: {1e3 * total / args.steps:.3f}")
    print(f"p95_step_ms: {1e3 * float(np.percentile(latencies, 95)):.3f}")
    print(f"steps_per_s: {args.steps / total:.1f}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadsim",
        description="Driving-scenario simulation toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-map", help="parse a map and report counts")
    p.add_argument("file", help="map file (.osm lanelet2 or .xodr)")
    p.add_argument("--format", choices=("osm", "xodr"))
    p.add_argument("--origin", type=_parse_origin, metavar="LAT,LON",
                   help="projection origin; default: first OSM node")
    p.add_argument("--dump", metavar="OUT.json",
                   help="also write the parsed map as a JSON dump")
    p.set_defaults(handler=_cmd_validate_map)

    p = sub.add_parser("replay", help="replay a dataset and audit events")
    p.add_argument("--map", required=True)
    p.add_argument("--tracks", required=True, help="trajectory CSV")
    p.add_argument("--schema", required=True,
                   help="dataset adapter (generic|interaction_like|levelx_like)")
    p.add_argument("--align", type=_parse_align, metavar="DX,DY,DTHETA,DT")
    p.add_argument("--format", choices=("osm", "xodr"))
    p.add_argument("--origin", type=_parse_origin, metavar="LAT,LON")
    p.add_argument("--signals", metavar="FILE.json",
                   help="signal programs {id: {offset, phases}}; default none")
    p.add_argument("--out", required=True, help="audit report JSON path")
    p.set_defaults(handler=_cmd_replay)

    p = sub.add_parser("run", help="run a scenario with a built-in policy")
    p.add_argument("--scenario", required=True, help="scenario config JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy", choices=POLICY_NAMES, default="idle")
    p.add_argument("--steps", type=int, help="override scenario max_steps")
    p.add_argument("--log", required=True, help="episode JSON-lines path")
    p.set_defaults(handler=_cmd_run)

    p = sub.add_parser("export-frames", help="write BEV frames as PPM/PGM")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, required=True,
                   help="number of frames; frame 0 is the reset state")
    p.add_argument("--bev", type=_parse_bev, required=True, metavar="WxH,RES")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_export_frames)

    p = sub.add_parser("bench", help="measure step throughput")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=1000)
    p.set_defaults(handler=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints its own message
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except LoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        io_cause = exc.__cause__ is None or isinstance(exc.__cause__, OSError)
        return 1 if io_cause else 2
    except (RoadSimError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
