"""Generate the synthetic map fixtures committed under tests/fixtures/.

Deterministic: same output bytes on every run. The manifest records element
counts from construction knowledge, not from parsing, so tests can use it as
an independent oracle.
"""

from __future__ import annotations

import json
import math
import pathlib

from roadsim.geometry import Point2
from roadsim.map_parsers import ProjectionSpec, unproject_wgs84

ORIGIN = ProjectionSpec(49.0, 8.4)
OUT_DIR = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"


class OsmBuilder:
    """Accumulates nodes/ways/relations and serializes lanelet2-style OSM."""

    def __init__(self):
        self.nodes: dict[tuple[float, float], int] = {}
        self.node_lines: list[str] = []
        self.way_lines: list[str] = []
        self.rel_lines: list[str] = []
        self._next_way = 2000
        self._next_rel = 3000

    def node(self, x: float, y: float) -> int:
        key = (float(x), float(y))
        if key in self.nodes:
            return self.nodes[key]
        nid = 1000 + len(self.nodes)
        self.nodes[key] = nid
        lat, lon = unproject_wgs84(Point2(key[0], key[1]), ORIGIN)
        self.node_lines.append(f'  <node id="{nid}" lat="{lat!r}" lon="{lon!r}"/>')
        return nid

    def way(self, pts, tags=()) -> int:
        wid = self._next_way
        self._next_way += 1
        refs = "".join(f'\n    <nd ref="{self.node(x, y)}"/>' for x, y in pts)
        tag_xml = "".join(f'\n    <tag k="{k}" v="{v}"/>' for k, v in tags)
        self.way_lines.append(f'  <way id="{wid}">{refs}{tag_xml}\n  </way>')
        return wid

    def relation(self, members, tags) -> int:
        rid = self._next_rel
        self._next_rel += 1
        member_xml = "".join(
            f'\n    <member type="{t}" ref="{ref}" role="{role}"/>'
            for t, ref, role in members
        )
        tag_xml = "".join(f'\n    <tag k="{k}" v="{v}"/>' for k, v in tags)
        self.rel_lines.append(
            f'  <relation id="{rid}">{member_xml}{tag_xml}\n  </relation>'
        )
        return rid

    def lanelet(self, left_way, right_way, tags=()) -> int:
        return self.relation(
            [("way", left_way, "left"), ("way", right_way, "right")],
            (("type", "lanelet"),) + tuple(tags),
        )

    def area(self, way_ids, subtype) -> int:
        return self.relation(
            [("way", w, "outer") for w in way_ids],
            (("type", "multipolygon"), ("subtype", subtype)),
        )

    def write(self, path: pathlib.Path) -> None:
        body = "\n".join(self.node_lines + self.way_lines + self.rel_lines)
        path.write_text(f'<osm version="0.6" generator="roadsim-fixtures">\n'
                        f"{body}\n</osm>\n")


def line_pts(x0, y0, x1, y1, n=2):
    return [
        (x0 + (x1 - x0) * i / (n - 1), y0 + (y1 - y0) * i / (n - 1))
        for i in range(n)
    ]


def arc_pts(cx, cy, r, a0_deg, a1_deg, n):
    out = []
    for i in range(n):
        a = math.radians(a0_deg + (a1_deg - a0_deg) * i / (n - 1))
        out.append((cx + r * math.cos(a), cy + r * math.sin(a)))
    return out


def gen_straight_osm():
    """400 m dual-lane one-way highway, shared middle boundary."""
    b = OsmBuilder()
    bottom = b.way(line_pts(0, 0, 400, 0))
    mid = b.way(line_pts(0, 3.5, 400, 3.5))
    top = b.way(line_pts(0, 7, 400, 7))
    tags = (("subtype", "highway"), ("one_way", "yes"), ("speed_limit", "120 km/h"))
    b.lanelet(mid, bottom, tags)
    b.lanelet(top, mid, tags)
    b.write(OUT_DIR / "straight.osm")
    return {"format": "osm", "lanes": 2, "linestrings": 3, "areas": 0, "regulatory": 0}


def gen_xsection_osm():
    """Signalized T-ish junction: east approach, straight + left turn, and a
    south exit reachable only illegally (no connecting junction lane)."""
    b = OsmBuilder()
    road = (("subtype", "road"), ("one_way", "yes"), ("speed_limit", "50 km/h"))
    junction = road + (("junction", "yes"),)

    in_e = b.lanelet(
        b.way(line_pts(-60, 0, -10, 0)), b.way(line_pts(-60, -3.5, -10, -3.5)), road
    )
    j_straight = b.lanelet(
        b.way(line_pts(-10, 0, 10, 0)), b.way(line_pts(-10, -3.5, 10, -3.5)), junction
    )
    # Left turn onto the north exit: quarter arcs about (-10, 10).
    j_left = b.lanelet(
        b.way(arc_pts(-10, 10, 10.0, -90, 0, 12)),
        b.way(arc_pts(-10, 10, 13.5, -90, 0, 12)),
        junction,
    )
    out_e = b.lanelet(
        b.way(line_pts(10, 0, 60, 0)), b.way(line_pts(10, -3.5, 60, -3.5)), road
    )
    out_n = b.lanelet(
        b.way(line_pts(0, 10, 0, 60)), b.way(line_pts(3.5, 10, 3.5, 60)), road
    )
    out_s = b.lanelet(
        b.way(line_pts(3.5, -10, 3.5, -60)), b.way(line_pts(0, -10, 0, -60)), road
    )
    stop_line = b.way(line_pts(-10, -3.5, -10, 0))
    b.relation(
        [("relation", in_e, "refers"), ("way", stop_line, "ref_line")],
        (("type", "regulatory_element"), ("subtype", "traffic_light")),
    )
    b.write(OUT_DIR / "xsection.osm")
    return {
        "format": "osm",
        "lanes": 6,
        "linestrings": 13,
        "areas": 0,
        "regulatory": 1,
    }


def gen_oval_osm():
    """Closed racing oval: two 60 m straights joined by R=20 semicircles,
    lane width 6, counterclockwise travel."""
    b = OsmBuilder()
    tags = (("subtype", "highway"), ("one_way", "yes"))
    bottom = b.lanelet(
        b.way(line_pts(-30, 3, 30, 3)), b.way(line_pts(-30, -3, 30, -3)), tags
    )
    right = b.lanelet(
        b.way(arc_pts(30, 20, 17.0, -90, 90, 24)),
        b.way(arc_pts(30, 20, 23.0, -90, 90, 24)),
        tags,
    )
    top = b.lanelet(
        b.way(line_pts(30, 37, -30, 37)), b.way(line_pts(30, 43, -30, 43)), tags
    )
    left = b.lanelet(
        b.way(arc_pts(-30, 20, 17.0, 90, 270, 24)),
        b.way(arc_pts(-30, 20, 23.0, 90, 270, 24)),
        tags,
    )
    b.write(OUT_DIR / "oval.osm")
    return {"format": "osm", "lanes": 4, "linestrings": 8, "areas": 0, "regulatory": 0}


def gen_ring_osm():
    """Single-lane roundabout ring: four chained quarter arcs, R=15, width 4."""
    b = OsmBuilder()
    tags = (("subtype", "road"), ("one_way", "yes"), ("speed_limit", "30 km/h"))
    for a0 in (-90, 0, 90, 180):
        b.lanelet(
            b.way(arc_pts(0, 0, 13.0, a0, a0 + 90, 14)),
            b.way(arc_pts(0, 0, 17.0, a0, a0 + 90, 14)),
            tags,
        )
    b.write(OUT_DIR / "ring.osm")
    return {"format": "osm", "lanes": 4, "linestrings": 8, "areas": 0, "regulatory": 0}


def gen_parking_osm():
    """Parking lot: freespace apron, central aisle lane, four spots."""
    b = OsmBuilder()
    lot = b.way([(0, 0), (40, 0), (40, 20), (0, 20), (0, 0)])
    aisle = b.lanelet(
        b.way(line_pts(0, 12, 40, 12)),
        b.way(line_pts(0, 8, 40, 8)),
        (("subtype", "parking_aisle"), ("one_way", "yes")),
    )
    b.area([lot], "freespace")
    for k in range(4):
        x0 = 4.0 + 8.0 * k
        spot = b.way([(x0, 12), (x0 + 3, 12), (x0 + 3, 17), (x0, 17), (x0, 12)])
        b.area([spot], "parking_spot")
    b.write(OUT_DIR / "parking.osm")
    return {"format": "osm", "lanes": 1, "linestrings": 7, "areas": 5, "regulatory": 0}


def gen_straight_xodr():
    doc = """<OpenDRIVE>
  <header revMajor="1" revMinor="6" name="straight"/>
  <road id="1" length="50" junction="-1">
    <type s="0" type="town"><speed max="50" unit="km/h"/></type>
    <planView>
      <geometry s="0" x="0" y="0" hdg="0" length="50"><line/></geometry>
    </planView>
    <lanes>
      <laneSection s="0">
        <center><lane id="0" type="none" level="false"/></center>
        <right>
          <lane id="-1" type="driving" level="false">
            <width sOffset="0" a="3.5" b="0" c="0" d="0"/>
          </lane>
        </right>
      </laneSection>
    </lanes>
  </road>
</OpenDRIVE>
"""
    (OUT_DIR / "straight.xodr").write_text(doc)
    return {
        "format": "xodr",
        "lanes": 1,
        "linestrings": 2,
        "areas": 0,
        "regulatory": 0,
    }


def gen_junction_xodr():
    road = """  <road id="{rid}" length="{length}" junction="{junction}">
{link}    <planView>
      <geometry s="0" x="{x}" y="0" hdg="0" length="{length}"><line/></geometry>
    </planView>
    <lanes>
      <laneSection s="0">
        <center><lane id="0" type="none" level="false"/></center>
        <right>
          <lane id="-1" type="driving" level="false">
{lane_link}            <width sOffset="0" a="3.5" b="0" c="0" d="0"/>
          </lane>
        </right>
      </laneSection>
    </lanes>
  </road>
"""
    r2_link = (
        '    <link><successor elementType="road" elementId="3" '
        'contactPoint="start"/></link>\n'
    )
    r2_lane_link = "            <link><successor id=\"-1\"/></link>\n"
    doc = (
        "<OpenDRIVE>\n"
        '  <header revMajor="1" revMinor="6" name="junction"/>\n'
        + road.format(rid=1, length=20, junction=-1, x=0, link="", lane_link="")
        + road.format(
            rid=2, length=10, junction=10, x=20, link=r2_link, lane_link=r2_lane_link
        )
        + road.format(rid=3, length=20, junction=-1, x=30, link="", lane_link="")
        + '  <junction id="10">\n'
        '    <connection id="0" incomingRoad="1" connectingRoad="2" '
        'contactPoint="start">\n'
        '      <laneLink from="-1" to="-1"/>\n'
        "    </connection>\n"
        "  </junction>\n"
        "</OpenDRIVE>\n"
    )
    (OUT_DIR / "junction.xodr").write_text(doc)
    return {
        "format": "xodr",
        "lanes": 3,
        "linestrings": 6,
        "areas": 0,
        "regulatory": 0,
    }


def main():
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    manifest = {
        "straight.osm": gen_straight_osm(),
        "xsection.osm": gen_xsection_osm(),
        "oval.osm": gen_oval_osm(),
        "ring.osm": gen_ring_osm(),
        "parking.osm": gen_parking_osm(),
        "straight.xodr": gen_straight_xodr(),
        "junction.xodr": gen_junction_xodr(),
    }
    manifest_doc = {
        "origin": {"lat": ORIGIN.origin_lat, "lon": ORIGIN.origin_lon},
        "files": manifest,
    }
    (OUT_DIR / "manifest.json").write_text(
        json.dumps(manifest_doc, indent=2) + "\n"
    )
    for name in manifest:
        print(f"wrote {name}")


if __name__ == "__main__":
    main()
