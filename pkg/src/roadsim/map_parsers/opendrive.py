"""OpenDrive (.xodr) parser: plan-view sampling and lane construction.

Supported subset: road/planView geometry (line, arc, spiral, poly3,
paramPoly3), laneSection/lane/width, road and lane links, junction
connections, and dynamic signals (traffic lights). Everything else is
collected as warnings. Left lanes travel against the reference line, so
their topology links run through lane predecessors rather than successors.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from ..errors import MalformedMapError
from ..geometry import Polyline, Pose2
from ..kernels import project_polyline
from ..map_model import (
    Lane,
    Linestring,
    RegulatoryElement,
    TrafficMap,
    build_centerline,
    default_centerline_samples,
)

DEFAULT_DS = 0.5

_LANE_TYPE_MAP = {
    "driving": "road",
    "parking": "parking_aisle",
    "biking": "bicycle",
}
_SPEED_UNIT = {"m/s": 1.0, "km/h": 1.0 / 3.6, "mph": 0.44704}


@dataclass(frozen=True)
class PlanViewSegment:
    """One parametric piece of a road's reference line."""

    kind: str  # line | arc | spiral | poly3 | param_poly3
    s_offset: float
    start: Pose2
    length: float
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("line", "arc", "spiral", "poly3", "param_poly3"):
            raise MalformedMapError(f"unknown plan-view kind {self.kind!r}")
        if not (math.isfinite(self.length) and self.length > 0):
            raise MalformedMapError("plan-view segment length must be positive")
        for key, value in self.params.items():
            if not math.isfinite(value):
                raise MalformedMapError(f"non-finite plan-view parameter {key!r}")


def _sample_values(length: float, ds: float) -> list[float]:
    out = []
    s = 0.0
    while s < length - 1e-9:
        out.append(s)
        s += ds
    out.append(length)
    return out


def _spiral_heading(seg: PlanViewSegment, s: float) -> float:
    c0 = seg.params["curv_start"]
    c1 = seg.params["curv_end"]
    return (
        seg.start.heading + c0 * s + (c1 - c0) * s * s / (2.0 * seg.length)
    )


def sample_plan_view(segment: PlanViewSegment, ds: float) -> Polyline:
    """Sample a plan-view segment at arc steps ds (endpoint always included)."""
    pts, _ = sample_plan_view_with_heading(segment, ds)
    return Polyline.dedupe(pts)


def sample_plan_view_with_heading(
    segment: PlanViewSegment, ds: float
) -> tuple[np.ndarray, np.ndarray]:
    """(points, headings) arrays sampled along the segment."""
    if ds <= 0:
        raise ValueError("ds must be positive")
    s_vals = _sample_values(segment.length, ds)
    x0, y0 = segment.start.x, segment.start.y
    th = segment.start.heading
    kind = segment.kind
    p = segment.params

    if kind == "line":
        pts = [(x0 + s * math.cos(th), y0 + s * math.sin(th)) for s in s_vals]
        hdgs = [th] * len(s_vals)

    elif kind == "arc":
        c = p["curvature"]
        if abs(c) < 1e-12:
            return sample_plan_view_with_heading(
                PlanViewSegment("line", segment.s_offset, segment.start, segment.length),
                ds,
            )
        pts = [
            (
                x0 + (math.sin(th + c * s) - math.sin(th)) / c,
                y0 - (math.cos(th + c * s) - math.cos(th)) / c,
            )
            for s in s_vals
        ]
        hdgs = [th + c * s for s in s_vals]

    elif kind == "spiral":
        h = min(ds, 0.1) / 4.0
        pts = [(x0, y0)]
        hdgs = [_spiral_heading(segment, 0.0)]
        x, y = x0, y0
        for s_a, s_b in zip(s_vals, s_vals[1:]):
            n = max(1, math.ceil((s_b - s_a) / h - 1e-12))
            hh = (s_b - s_a) / n
            s = s_a
            for _ in range(n):
                t1 = _spiral_heading(segment, s)
                t2 = _spiral_heading(segment, s + hh / 2.0)
                t4 = _spiral_heading(segment, s + hh)
                x += hh * (math.cos(t1) + 4.0 * math.cos(t2) + math.cos(t4)) / 6.0
                y += hh * (math.sin(t1) + 4.0 * math.sin(t2) + math.sin(t4)) / 6.0
                s += hh
            pts.append((x, y))
            hdgs.append(_spiral_heading(segment, s_b))

    else:  # poly3 / param_poly3 evaluated directly by parameter
        cos_t, sin_t = math.cos(th), math.sin(th)
        pts = []
        hdgs = []
        for s in s_vals:
            if kind == "poly3":
                u = s
                v = p["a"] + p["b"] * u + p["c"] * u * u + p["d"] * u**3
                du, dv = 1.0, p["b"] + 2.0 * p["c"] * u + 3.0 * p["d"] * u * u
            else:
                pr = s / segment.length if p.get("p_range_normalized") else s
                u = p["aU"] + p["bU"] * pr + p["cU"] * pr * pr + p["dU"] * pr**3
                v = p["aV"] + p["bV"] * pr + p["cV"] * pr * pr + p["dV"] * pr**3
                du = p["bU"] + 2.0 * p["cU"] * pr + 3.0 * p["dU"] * pr * pr
                dv = p["bV"] + 2.0 * p["cV"] * pr + 3.0 * p["dV"] * pr * pr
            pts.append((x0 + u * cos_t - v * sin_t, y0 + u * sin_t + v * cos_t))
            hdgs.append(th + math.atan2(dv, du))

    arr = np.asarray(pts, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise MalformedMapError("plan-view sampling produced non-finite points")
    return arr, np.asarray(hdgs, dtype=np.float64)


def _parse_plan_view(road) -> list[PlanViewSegment]:
    segments = []
    plan_view = road.find("planView")
    if plan_view is None:
        return segments
    for geom in plan_view.findall("geometry"):
        start = Pose2.of(
            float(geom.get("x", "nan")),
            float(geom.get("y", "nan")),
            float(geom.get("hdg", "nan")),
        )
        s_offset = float(geom.get("s", "0"))
        length = float(geom.get("length", "nan"))
        child = next(iter(geom), None)
        if child is None:
            raise MalformedMapError(
                "geometry without a shape record", element_id=road.get("id")
            )
        tag = child.tag
        if tag == "line":
            seg = PlanViewSegment("line", s_offset, start, length)
        elif tag == "arc":
            seg = PlanViewSegment(
                "arc", s_offset, start, length,
                {"curvature": float(child.get("curvature", "nan"))},
            )
        elif tag == "spiral":
            seg = PlanViewSegment(
                "spiral", s_offset, start, length,
                {
                    "curv_start": float(child.get("curvStart", "nan")),
                    "curv_end": float(child.get("curvEnd", "nan")),
                },
            )
        elif tag == "poly3":
            seg = PlanViewSegment(
                "poly3", s_offset, start, length,
                {k: float(child.get(k, "nan")) for k in ("a", "b", "c", "d")},
            )
        elif tag == "paramPoly3":
            params = {
                k: float(child.get(k, "nan"))
                for k in ("aU", "bU", "cU", "dU", "aV", "bV", "cV", "dV")
            }
            params["p_range_normalized"] = float(
                child.get("pRange", "normalized") == "normalized"
            )
            seg = PlanViewSegment("param_poly3", s_offset, start, length, params)
        else:
            raise MalformedMapError(
                f"unknown plan-view record {tag!r}", element_id=road.get("id")
            )
        segments.append(seg)
    return segments


class _WidthPoly:
    """Per-lane width polynomial segments keyed by sOffset."""

    def __init__(self, lane_el):
        self.records = []
        for w in lane_el.findall("width"):
            self.records.append(
                (
                    float(w.get("sOffset", "0")),
                    tuple(float(w.get(k, "0")) for k in ("a", "b", "c", "d")),
                )
            )
        self.records.sort(key=lambda r: r[0])

    def at(self, ds_local: float) -> float:
        if not self.records:
            return 0.0
        chosen = self.records[0]
        for rec in self.records:
            if rec[0] <= ds_local + 1e-9:
                chosen = rec
            else:
                break
        off, (a, b, c, d) = chosen
        x = ds_local - off
        return a + b * x + c * x * x + d * x**3


@dataclass
class _LaneRef:
    """Working record for one OpenDrive lane before Lane construction."""

    road_id: str
    section: int
    lane_num: int  # signed OpenDrive id
    lane_type: str
    left_ls: str
    right_ls: str
    left_pl: Polyline
    right_pl: Polyline
    succ_num: Optional[int]
    pred_num: Optional[int]

    @property
    def id(self) -> str:
        return f"{self.road_id}.{self.section}.{self.lane_num}"


def parse_opendrive(xml: str, ds: float = DEFAULT_DS) -> TrafficMap:
    """Parse OpenDrive XML into a TrafficMap."""
    if ds <= 0:
        raise ValueError("ds must be positive")
    try:
        root = ET.fromstring(xml)
    except ET.ParseError as exc:
        raise MalformedMapError(f"invalid XML: {exc}")
    warnings: list[str] = []
    linestrings: dict[str, Linestring] = {}
    lane_refs: dict[str, _LaneRef] = {}
    by_road: dict[str, dict[tuple[int, int], _LaneRef]] = {}
    road_meta: dict[str, dict] = {}
    regulatory: list[RegulatoryElement] = []

    for road in root.findall("road"):
        road_id = road.get("id", "")
        in_junction = road.get("junction", "-1") != "-1"
        segments = _parse_plan_view(road)
        if not segments:
            warnings.append(f"road {road_id}: no plan view, skipped")
            continue

        speed_limit = None
        type_el = road.find("type")
        if type_el is not None:
            speed_el = type_el.find("speed")
            if speed_el is not None:
                unit = speed_el.get("unit", "m/s")
                if unit not in _SPEED_UNIT:
                    warnings.append(f"road {road_id}: unknown speed unit {unit!r}")
                else:
                    speed_limit = float(speed_el.get("max", "nan")) * _SPEED_UNIT[unit]
                    if not math.isfinite(speed_limit):
                        speed_limit = None

        # Sample the full reference line once; s_arr is the true arc parameter.
        s_list: list[float] = []
        pt_list: list[np.ndarray] = []
        hdg_list: list[np.ndarray] = []
        for seg in segments:
            pts, hdgs = sample_plan_view_with_heading(seg, ds)
            svals = np.asarray(_sample_values(seg.length, ds)) + seg.s_offset
            if s_list and abs(svals[0] - s_list[-1][-1]) < 1e-9:
                svals, pts, hdgs = svals[1:], pts[1:], hdgs[1:]
            s_list.append(svals)
            pt_list.append(pts)
            hdg_list.append(hdgs)
        s_arr = np.concatenate(s_list)
        ref_pts = np.vstack(pt_list)
        ref_hdg = np.concatenate(hdg_list)
        road_meta[road_id] = {
            "s": s_arr,
            "pts": ref_pts,
            "hdg": ref_hdg,
            "in_junction": in_junction,
            "speed_limit": speed_limit,
            "signals": road.find("signals"),
            "link": road.find("link"),
            "sections": [],
        }

        lanes_el = road.find("lanes")
        if lanes_el is None:
            warnings.append(f"road {road_id}: no lanes element, skipped")
            continue
        for off_el in lanes_el.findall("laneOffset"):
            if any(float(off_el.get(k, "0")) != 0.0 for k in ("a", "b", "c", "d")):
                warnings.append(f"road {road_id}: laneOffset unsupported, ignored")
                break

        sections = lanes_el.findall("laneSection")
        sec_starts = [float(s.get("s", "0")) for s in sections]
        road_len = float(s_arr[-1])
        by_road.setdefault(road_id, {})

        for sec_idx, sec_el in enumerate(sections):
            s_lo = sec_starts[sec_idx]
            s_hi = sec_starts[sec_idx + 1] if sec_idx + 1 < len(sections) else road_len
            mask = (s_arr >= s_lo - 1e-9) & (s_arr <= s_hi + 1e-9)
            idx = np.nonzero(mask)[0]
            if idx.size < 2:
                warnings.append(
                    f"road {road_id}: lane section {sec_idx} shorter than ds, skipped"
                )
                continue
            sec_s = s_arr[idx]
            sec_pts = ref_pts[idx]
            normals = np.stack(
                [-np.sin(ref_hdg[idx]), np.cos(ref_hdg[idx])], axis=1
            )
            road_meta[road_id]["sections"].append((s_lo, s_hi, sec_idx))

            for side_el_name, sign in (("right", -1), ("left", 1)):
                side_el = sec_el.find(side_el_name)
                if side_el is None:
                    continue
                side_lanes = sorted(
                    side_el.findall("lane"),
                    key=lambda el: abs(int(el.get("id", "0"))),
                )
                cumulative = np.zeros(len(idx))
                inner_ls_id = f"{road_id}.{sec_idx}.b0"
                if inner_ls_id not in linestrings:
                    linestrings[inner_ls_id] = Linestring(
                        inner_ls_id, Polyline.dedupe(sec_pts), {"type": "reference"}
                    )
                inner_pl = linestrings[inner_ls_id].geometry
                for lane_el in side_lanes:
                    lane_num = int(lane_el.get("id", "0"))
                    lane_type = lane_el.get("type", "driving")
                    widths = _WidthPoly(lane_el)
                    w = np.array([widths.at(s - s_lo) for s in sec_s])
                    outer_off = cumulative + w
                    outer_pts = sec_pts + sign * outer_off[:, None] * normals
                    outer_ls_id = f"{road_id}.{sec_idx}.b{lane_num}"
                    outer_pl = Polyline.dedupe(outer_pts)
                    if lane_type not in _LANE_TYPE_MAP:
                        if lane_type != "none":
                            warnings.append(
                                f"road {road_id}: lane type {lane_type!r} "
                                "unsupported, skipped"
                            )
                        cumulative = outer_off
                        inner_pl = outer_pl
                        inner_ls_id = outer_ls_id
                        linestrings.setdefault(
                            outer_ls_id,
                            Linestring(outer_ls_id, outer_pl, {"type": "boundary"}),
                        )
                        continue
                    linestrings[outer_ls_id] = Linestring(
                        outer_ls_id, outer_pl, {"type": "boundary"}
                    )
                    link_el = lane_el.find("link")
                    succ_num = pred_num = None
                    if link_el is not None:
                        s_el = link_el.find("successor")
                        p_el = link_el.find("predecessor")
                        succ_num = int(s_el.get("id")) if s_el is not None else None
                        pred_num = int(p_el.get("id")) if p_el is not None else None
                    # Travel frame: right lanes follow the reference line, so
                    # inner boundary is on the left; left lanes run reversed,
                    # and the inner boundary is still on their left.
                    ref = _LaneRef(
                        road_id,
                        sec_idx,
                        lane_num,
                        lane_type,
                        inner_ls_id,
                        outer_ls_id,
                        inner_pl if sign < 0 else inner_pl.reversed(),
                        outer_pl if sign < 0 else outer_pl.reversed(),
                        succ_num,
                        pred_num,
                    )
                    lane_refs[ref.id] = ref
                    by_road[road_id][(sec_idx, lane_num)] = ref
                    cumulative = outer_off
                    inner_pl = outer_pl
                    inner_ls_id = outer_ls_id

    successors = _link_topology(root, by_road, road_meta, warnings)

    lanes = []
    for ref in lane_refs.values():
        meta = road_meta[ref.road_id]
        center = build_centerline(
            ref.left_pl,
            ref.right_pl,
            default_centerline_samples(ref.left_pl, ref.right_pl),
        )
        lanes.append(
            Lane(
                ref.id,
                ref.left_ls,
                ref.right_ls,
                center,
                subtype=_LANE_TYPE_MAP[ref.lane_type],
                one_way=True,
                speed_limit=meta["speed_limit"],
                successors=tuple(sorted(successors.get(ref.id, ()))),
                in_junction=meta["in_junction"],
            )
        )

    _parse_signals(road_meta, by_road, linestrings, regulatory, warnings)

    return TrafficMap(
        linestrings=list(linestrings.values()),
        lanes=lanes,
        areas=[],
        regulatory=regulatory,
        warnings=warnings,
    )


def _link_topology(root, by_road, road_meta, warnings) -> dict[str, set]:
    """Travel-direction successor edges from lane, road, and junction links."""
    successors: dict[str, set] = {}

    def add(a: Optional[_LaneRef], b: Optional[_LaneRef]):
        if a is not None and b is not None:
            successors.setdefault(a.id, set()).add(b.id)

    for road_id, lanes in by_road.items():
        n_sections = len({sec for sec, _ in lanes})
        link_el = road_meta[road_id]["link"]
        road_succ = road_pred = None
        if link_el is not None:
            road_succ = link_el.find("successor")
            road_pred = link_el.find("predecessor")

        for (sec, num), ref in lanes.items():
            if num < 0:  # travels with the reference line
                if ref.succ_num is None:
                    continue
                if sec + 1 < n_sections:
                    add(ref, lanes.get((sec + 1, ref.succ_num)))
                elif road_succ is not None and road_succ.get("elementType") == "road":
                    target = by_road.get(road_succ.get("elementId"), {})
                    if road_succ.get("contactPoint", "start") != "start":
                        warnings.append(
                            f"road {road_id}: successor contactPoint=end unsupported"
                        )
                        continue
                    add(ref, target.get((0, ref.succ_num)))
            else:  # left lane: travels backwards, so follow predecessors
                if ref.pred_num is None:
                    continue
                if sec > 0:
                    add(ref, lanes.get((sec - 1, ref.pred_num)))
                elif road_pred is not None and road_pred.get("elementType") == "road":
                    target_road = road_pred.get("elementId")
                    target = by_road.get(target_road, {})
                    if road_pred.get("contactPoint", "end") != "end":
                        warnings.append(
                            f"road {road_id}: predecessor contactPoint=start "
                            "unsupported for left lanes"
                        )
                        continue
                    last_sec = max((s for s, _ in target), default=0)
                    add(ref, target.get((last_sec, ref.pred_num)))

    for junction in root.findall("junction"):
        for conn in junction.findall("connection"):
            incoming = by_road.get(conn.get("incomingRoad", ""), {})
            connecting = by_road.get(conn.get("connectingRoad", ""), {})
            contact = conn.get("contactPoint", "start")
            if contact != "start":
                warnings.append(
                    f"junction {junction.get('id')}: contactPoint=end unsupported"
                )
                continue
            in_last = max((s for s, _ in incoming), default=0)
            for link in conn.findall("laneLink"):
                from_num = int(link.get("from", "0"))
                to_num = int(link.get("to", "0"))
                src = (
                    incoming.get((in_last, from_num))
                    if from_num < 0
                    else incoming.get((0, from_num))
                )
                add(src, connecting.get((0, to_num)))
    return successors


def _parse_signals(road_meta, by_road, linestrings, regulatory, warnings) -> None:
    for road_id, meta in road_meta.items():
        signals_el = meta["signals"]
        if signals_el is None:
            continue
        for sig in signals_el.findall("signal"):
            sig_id = sig.get("id", "")
            if sig.get("dynamic", "no") != "yes":
                warnings.append(f"road {road_id}: static signal {sig_id} skipped")
                continue
            s_pos = float(sig.get("s", "0"))
            orientation = sig.get("orientation", "none")
            s_arr = meta["s"]
            k = int(np.clip(np.searchsorted(s_arr, s_pos), 1, len(s_arr) - 1))
            f = (s_pos - s_arr[k - 1]) / (s_arr[k] - s_arr[k - 1])
            px, py = meta["pts"][k - 1] + f * (meta["pts"][k] - meta["pts"][k - 1])
            heading = meta["hdg"][k - 1]
            nx, ny = -math.sin(heading), math.cos(heading)

            sec_idx = 0
            for s_lo, s_hi, si in meta["sections"]:
                if s_lo - 1e-9 <= s_pos <= s_hi + 1e-9:
                    sec_idx = si
                    break
            governed = []
            extent = 0.0
            for (sec, num), ref in sorted(by_road.get(road_id, {}).items()):
                if sec != sec_idx:
                    continue
                if orientation == "+" and num > 0:
                    continue
                if orientation == "-" and num < 0:
                    continue
                governed.append(ref.id)
                outer = ref.right_pl if num < 0 else ref.left_pl
                _, d, _ = project_polyline(px, py, outer.pts, outer.cum)
                extent = max(extent, abs(d))
            if not governed:
                warnings.append(f"road {road_id}: signal {sig_id} governs no lanes")
                continue
            extent += 0.5
            a = (px + nx * extent, py + ny * extent)
            b = (px - nx * extent, py - ny * extent)
            ls_id = f"{road_id}.sig.{sig_id}.line"
            linestrings[ls_id] = Linestring(
                ls_id, Polyline([a, b]), {"type": "stop_line"}
            )
            regulatory.append(
                RegulatoryElement(
                    f"{road_id}.sig.{sig_id}",
                    "traffic_light_group",
                    tuple(governed),
                    ls_id,
                    {
                        k: v
                        for k, v in sorted(sig.attrib.items())
                        if k in ("name", "type", "subtype")
                    },
                )
            )
