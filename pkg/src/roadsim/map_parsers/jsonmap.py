"""Canonical JSON serialization of a TrafficMap.

dump -> load -> dump is byte-identical: elements are sorted by id and floats
round-trip through repr. The derived centerline is stored explicitly so a
loaded map reproduces the original geometry exactly.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import MalformedMapError
from ..geometry import Polyline
from ..map_model import AreaRegion, Lane, Linestring, RegulatoryElement, TrafficMap

FORMAT_NAME = "roadsim-map"
FORMAT_VERSION = 1


def _points(arr: np.ndarray) -> list[list[float]]:
    return [[float(x), float(y)] for x, y in arr]


def map_to_dict(tmap: TrafficMap) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "linestrings": [
            {
                "id": ls.id,
                "points": _points(ls.geometry.pts),
                "tags": dict(sorted(ls.tags.items())),
            }
            for ls in sorted(tmap.linestrings.values(), key=lambda e: e.id)
        ],
        "lanes": [
            {
                "id": ln.id,
                "left_boundary": ln.left_boundary,
                "right_boundary": ln.right_boundary,
                "centerline": _points(ln.centerline.pts),
                "subtype": ln.subtype,
                "one_way": ln.one_way,
                "speed_limit": ln.speed_limit,
                "successors": list(ln.successors),
                "adjacent_left": ln.adjacent_left,
                "adjacent_right": ln.adjacent_right,
                "in_junction": ln.in_junction,
            }
            for ln in sorted(tmap.lanes.values(), key=lambda e: e.id)
        ],
        "areas": [
            {
                "id": ar.id,
                "ring": _points(ar.ring),
                "subtype": ar.subtype,
            }
            for ar in sorted(tmap.areas.values(), key=lambda e: e.id)
        ],
        "regulatory": [
            {
                "id": re.id,
                "kind": re.kind,
                "governed_lanes": list(re.governed_lanes),
                "stop_line": re.stop_line,
                "parameters": dict(sorted(re.parameters.items())),
            }
            for re in sorted(tmap.regulatory.values(), key=lambda e: e.id)
        ],
        "warnings": list(tmap.warnings),
    }


def dump_map(tmap: TrafficMap) -> str:
    return json.dumps(map_to_dict(tmap), indent=2) + "\n"


def map_from_dict(doc: dict) -> TrafficMap:
    if doc.get("format") != FORMAT_NAME:
        raise MalformedMapError(f"not a {FORMAT_NAME} document")
    if doc.get("version") != FORMAT_VERSION:
        raise MalformedMapError(f"unsupported map version {doc.get('version')!r}")
    try:
        linestrings = [
            Linestring(d["id"], Polyline(d["points"]), dict(d.get("tags", {})))
            for d in doc.get("linestrings", [])
        ]
        lanes = [
            Lane(
                d["id"],
                d["left_boundary"],
                d["right_boundary"],
                Polyline(d["centerline"]),
                subtype=d.get("subtype", "road"),
                one_way=d.get("one_way", True),
                speed_limit=d.get("speed_limit"),
                successors=tuple(d.get("successors", ())),
                adjacent_left=d.get("adjacent_left"),
                adjacent_right=d.get("adjacent_right"),
                in_junction=d.get("in_junction", False),
            )
            for d in doc.get("lanes", [])
        ]
        areas = [
            AreaRegion(d["id"], np.asarray(d["ring"], dtype=np.float64), d["subtype"])
            for d in doc.get("areas", [])
        ]
        regulatory = [
            RegulatoryElement(
                d["id"],
                d["kind"],
                tuple(d.get("governed_lanes", ())),
                d.get("stop_line"),
                dict(d.get("parameters", {})),
            )
            for d in doc.get("regulatory", [])
        ]
    except KeyError as exc:
        raise MalformedMapError(f"map document missing field {exc}")
    return TrafficMap(
        linestrings=linestrings,
        lanes=lanes,
        areas=areas,
        regulatory=regulatory,
        warnings=doc.get("warnings", ()),
    )


def load_map(text: str) -> TrafficMap:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedMapError(f"invalid JSON: {exc}")
    if not isinstance(doc, dict):
        raise MalformedMapError("map document must be a JSON object")
    return map_from_dict(doc)
