"""Lanelet2-tagged OpenStreetMap XML parser.

Supported subset: node (id, lat, lon), way (id, nd refs, tags), relation
with type=lanelet (roles left/right), type=multipolygon (role outer), and
type=regulatory_element (roles refers/ref_line). Unknown relation tags and
roles become warnings, never failures; a missing member reference is a hard
malformed-map error naming the relation.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import replace

import numpy as np

from ..errors import MalformedMapError
from ..geometry import Point2, Polyline
from ..map_model import (
    AREA_SUBTYPES,
    LANE_SUBTYPES,
    REGULATORY_KINDS,
    AreaRegion,
    Lane,
    Linestring,
    RegulatoryElement,
    TrafficMap,
    build_centerline,
    default_centerline_samples,
)
from .projection import ProjectionSpec, project_wgs84

ENDPOINT_TOL = 1e-6  # meters: boundary endpoints closer than this connect

_LANELET_TAGS = {
    "type",
    "subtype",
    "one_way",
    "speed_limit",
    "junction",
    "location",
    "region",
}
_REGULATORY_KIND_ALIASES = {
    "traffic_light": "traffic_light_group",
    "traffic_light_group": "traffic_light_group",
    "speed_limit": "speed_limit",
    "right_of_way": "right_of_way",
    "turn_restriction": "turn_restriction",
}


def _tags(element) -> dict[str, str]:
    return {
        t.get("k", ""): t.get("v", "") for t in element.findall("tag")
    }


def _members_by_role(relation) -> dict[str, list[tuple[str, str]]]:
    roles: dict[str, list[tuple[str, str]]] = {}
    for m in relation.findall("member"):
        roles.setdefault(m.get("role", ""), []).append(
            (m.get("type", ""), m.get("ref", ""))
        )
    return roles


def _parse_speed_limit(raw: str) -> float | None:
    """Speed tag in m/s, or km/h with an explicit suffix."""
    text = raw.strip().lower()
    factor = 1.0
    for suffix in ("km/h", "kmh", "kph"):
        if text.endswith(suffix):
            text = text[: -len(suffix)].strip()
            factor = 1.0 / 3.6
            break
    else:
        if text.endswith("m/s"):
            text = text[:-3].strip()
    try:
        return float(text) * factor
    except ValueError:
        return None


def _oriented_boundaries(left: Polyline, right: Polyline) -> tuple[Polyline, Polyline]:
    """Orient both boundaries along the travel direction.

    The member ways may be drawn in either direction. First the right
    boundary is flipped if its endpoints pair better with the left reversed,
    then both are flipped together if "left" is not actually on the left.
    """

    def endpoint_cost(a: Polyline, b: Polyline) -> float:
        return math.hypot(
            a.pts[0, 0] - b.pts[0, 0], a.pts[0, 1] - b.pts[0, 1]
        ) + math.hypot(a.pts[-1, 0] - b.pts[-1, 0], a.pts[-1, 1] - b.pts[-1, 1])

    if endpoint_cost(left, right.reversed()) < endpoint_cost(left, right):
        right = right.reversed()
    mid = left.length / 2.0
    lx, ly, heading = left.point_at(mid)
    rx, ry, _ = right.point_at(right.length / 2.0)
    cross = math.cos(heading) * (ry - ly) - math.sin(heading) * (rx - lx)
    if cross > 0.0:  # "right" sits on the left: travel direction is reversed
        left, right = left.reversed(), right.reversed()
    return left, right


def parse_osm_lanelet2(xml: str, projection: ProjectionSpec) -> TrafficMap:
    """Parse lanelet2-tagged OSM XML into a TrafficMap."""
    try:
        root = ET.fromstring(xml)
    except ET.ParseError as exc:
        raise MalformedMapError(f"invalid XML: {exc}")
    warnings: list[str] = []

    nodes: dict[str, Point2] = {}
    for node in root.findall("node"):
        nodes[node.get("id", "")] = project_wgs84(
            float(node.get("lat", "nan")), float(node.get("lon", "nan")), projection
        )

    linestrings: dict[str, Linestring] = {}
    for way in root.findall("way"):
        way_id = way.get("id", "")
        refs = [nd.get("ref", "") for nd in way.findall("nd")]
        for ref in refs:
            if ref not in nodes:
                raise MalformedMapError(
                    f"way references missing node {ref!r}", element_id=way_id
                )
        if len(refs) < 2:
            raise MalformedMapError("way has fewer than 2 nodes", element_id=way_id)
        pts = [(nodes[r].x, nodes[r].y) for r in refs]
        linestrings[way_id] = Linestring(way_id, Polyline.dedupe(pts), _tags(way))

    lanes: dict[str, Lane] = {}
    lane_boundaries: dict[str, tuple[Polyline, Polyline]] = {}
    areas: list[AreaRegion] = []
    regulatory: list[RegulatoryElement] = []
    deferred_regulatory: list[tuple] = []
    lanelet_ids: set[str] = set()

    for rel in root.findall("relation"):
        rel_id = rel.get("id", "")
        tags = _tags(rel)
        rel_type = tags.get("type", "")
        roles = _members_by_role(rel)

        if rel_type == "lanelet":
            lanelet_ids.add(rel_id)
            for role in ("left", "right"):
                if role not in roles:
                    raise MalformedMapError(
                        f"lanelet relation {rel_id} missing {role} member",
                        element_id=rel_id,
                    )
                ref = roles[role][0][1]
                if ref not in linestrings:
                    raise MalformedMapError(
                        f"lanelet relation {rel_id} references missing way {ref!r}",
                        element_id=rel_id,
                    )
            left_id = roles["left"][0][1]
            right_id = roles["right"][0][1]
            for key in sorted(tags):
                if key not in _LANELET_TAGS:
                    warnings.append(f"relation {rel_id}: unknown tag {key!r}")
            subtype = tags.get("subtype", "road")
            if subtype not in LANE_SUBTYPES:
                warnings.append(
                    f"relation {rel_id}: unknown lane subtype {subtype!r}, using road"
                )
                subtype = "road"
            speed_limit = None
            if "speed_limit" in tags:
                speed_limit = _parse_speed_limit(tags["speed_limit"])
                if speed_limit is None:
                    warnings.append(
                        f"relation {rel_id}: unreadable speed_limit "
                        f"{tags['speed_limit']!r}"
                    )
            left, right = _oriented_boundaries(
                linestrings[left_id].geometry, linestrings[right_id].geometry
            )
            center = build_centerline(
                left, right, default_centerline_samples(left, right)
            )
            lane_boundaries[rel_id] = (left, right)
            lanes[rel_id] = Lane(
                rel_id,
                left_id,
                right_id,
                center,
                subtype=subtype,
                one_way=tags.get("one_way", "yes") != "no",
                speed_limit=speed_limit,
                in_junction=tags.get("junction", "") == "yes",
            )

        elif rel_type == "multipolygon":
            if "outer" not in roles:
                raise MalformedMapError(
                    f"multipolygon relation {rel_id} missing outer member",
                    element_id=rel_id,
                )
            ring_pts: list[tuple[float, float]] = []
            for _, ref in roles["outer"]:
                if ref not in linestrings:
                    raise MalformedMapError(
                        f"multipolygon relation {rel_id} references missing way "
                        f"{ref!r}",
                        element_id=rel_id,
                    )
                pts = [tuple(p) for p in linestrings[ref].geometry.pts]
                if ring_pts and math.hypot(
                    ring_pts[-1][0] - pts[0][0], ring_pts[-1][1] - pts[0][1]
                ) < ENDPOINT_TOL:
                    pts = pts[1:]
                ring_pts.extend(pts)
            if len(ring_pts) > 1 and math.hypot(
                ring_pts[0][0] - ring_pts[-1][0], ring_pts[0][1] - ring_pts[-1][1]
            ) < ENDPOINT_TOL:
                ring_pts = ring_pts[:-1]
            subtype = tags.get("subtype", "freespace")
            if subtype not in AREA_SUBTYPES:
                warnings.append(
                    f"relation {rel_id}: unknown area subtype {subtype!r}, "
                    "using freespace"
                )
                subtype = "freespace"
            areas.append(AreaRegion(rel_id, np.asarray(ring_pts), subtype))

        elif rel_type == "regulatory_element":
            kind_raw = tags.get("subtype", "")
            kind = _REGULATORY_KIND_ALIASES.get(kind_raw)
            if kind is None or kind not in REGULATORY_KINDS:
                warnings.append(
                    f"relation {rel_id}: unknown regulatory subtype {kind_raw!r}, "
                    "skipped"
                )
                continue
            governed = tuple(ref for _, ref in roles.get("refers", ()))
            stop_line = None
            if "ref_line" in roles:
                stop_line = roles["ref_line"][0][1]
                if stop_line not in linestrings:
                    raise MalformedMapError(
                        f"regulatory relation {rel_id} references missing way "
                        f"{stop_line!r}",
                        element_id=rel_id,
                    )
            params = {
                k: v for k, v in sorted(tags.items()) if k not in ("type", "subtype")
            }
            deferred_regulatory.append((rel_id, kind, governed, stop_line, params))

        else:
            warnings.append(f"relation {rel_id}: unknown type {rel_type!r}, skipped")

    # Regulatory elements may reference lanelets parsed after them.
    for rel_id, kind, governed, stop_line, params in deferred_regulatory:
        for ref in governed:
            if ref not in lanelet_ids:
                raise MalformedMapError(
                    f"regulatory relation {rel_id} references missing lanelet "
                    f"{ref!r}",
                    element_id=rel_id,
                )
        regulatory.append(
            RegulatoryElement(rel_id, kind, governed, stop_line, params)
        )

    _infer_topology(lanes, lane_boundaries)
    return TrafficMap(
        linestrings=list(linestrings.values()),
        lanes=list(lanes.values()),
        areas=areas,
        regulatory=regulatory,
        warnings=warnings,
    )


def _infer_topology(
    lanes: dict[str, Lane], boundaries: dict[str, tuple[Polyline, Polyline]]
) -> None:
    """Fill successors (shared boundary endpoints) and adjacency (shared ways)."""

    def ends(lane_id):
        left, right = boundaries[lane_id]
        return left.pts[-1], right.pts[-1]

    def starts(lane_id):
        left, right = boundaries[lane_id]
        return left.pts[0], right.pts[0]

    ordered = sorted(lanes)
    for lane_id in ordered:
        le, re_ = ends(lane_id)
        succ = []
        for other_id in ordered:
            if other_id == lane_id:
                continue
            ls, rs = starts(other_id)
            if (
                math.hypot(le[0] - ls[0], le[1] - ls[1]) < ENDPOINT_TOL
                and math.hypot(re_[0] - rs[0], re_[1] - rs[1]) < ENDPOINT_TOL
            ):
                succ.append(other_id)
        if succ:
            lanes[lane_id] = replace(lanes[lane_id], successors=tuple(succ))

    for lane_id in ordered:
        for other_id in ordered:
            if other_id == lane_id:
                continue
            lane, other = lanes[lane_id], lanes[other_id]
            if lane.left_boundary == other.right_boundary and lane.adjacent_left is None:
                lanes[lane_id] = replace(lane, adjacent_left=other_id)
            if lane.right_boundary == other.left_boundary and lane.adjacent_right is None:
                lanes[lane_id] = replace(lanes[lane_id], adjacent_right=other_id)
