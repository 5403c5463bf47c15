"""Road-network model: centerlines, containment, routing, coverage."""

import math
import random

import numpy as np
import pytest

from roadsim.errors import MalformedMapError, MapLookupError
from roadsim.geometry import ConvexPolygon, OrientedBox, Point2, Polyline, Pose2, box_vertices
from roadsim.map_model import (
    AreaRegion,
    Lane,
    Linestring,
    RegulatoryElement,
    TrafficMap,
    build_centerline,
    decompose_ring,
    default_centerline_samples,
    lane_direction_at,
)


def straight(y, x0=0.0, x1=50.0, n=2):
    xs = np.linspace(x0, x1, n)
    return Polyline([(x, y) for x in xs])


def make_lane(lane_id, left, right, **kw):
    n = default_centerline_samples(left.geometry, right.geometry)
    center = build_centerline(left.geometry, right.geometry, n)
    return Lane(lane_id, left.id, right.id, center, **kw)


def straight_map():
    """Two 50 m one-way lanes side by side along +x, 4 m wide each."""
    ls = [
        Linestring("l0", straight(4.0)),
        Linestring("l1", straight(0.0)),
        Linestring("l2", straight(-4.0)),
    ]
    lanes = [
        make_lane("lane_a", ls[0], ls[1], adjacent_right="lane_b"),
        make_lane("lane_b", ls[1], ls[2], adjacent_left="lane_a"),
    ]
    return TrafficMap(linestrings=ls, lanes=lanes)


def arc_polyline(radius, n=80, start=0.0, sweep=math.pi / 2, cx=0.0, cy=0.0):
    angs = np.linspace(start, start + sweep, n)
    return Polyline(
        [(cx + radius * math.cos(a), cy + radius * math.sin(a)) for a in angs]
    )


# ---------------------------------------------------------------------------
# build_centerline
# ---------------------------------------------------------------------------


def test_centerline_straight_symmetric():
    center = build_centerline(straight(1.0, n=5), straight(-1.0, n=5), 11)
    assert np.allclose(center.pts[:, 1], 0.0)
    assert center.pts[0, 0] == pytest.approx(0.0)
    assert center.pts[-1, 0] == pytest.approx(50.0)


def test_centerline_identical_boundaries():
    b = straight(2.0, n=4)
    center = build_centerline(b, b, 9)
    assert np.allclose(center.pts[:, 1], 2.0)
    assert center.length == pytest.approx(b.length, rel=1e-12)


def test_centerline_quarter_arcs():
    # Left R=11 and right R=9 quarter arcs about a common center: the
    # midpoint curve must hug the R=10 arc.
    left = arc_polyline(11.0)
    right = arc_polyline(9.0)
    center = build_centerline(left, right, 64)
    radii = np.hypot(center.pts[:, 0], center.pts[:, 1])
    assert np.abs(radii - 10.0).max() < 0.05


def test_centerline_rejects_degenerate_boundary():
    tiny = Polyline([(0, 0), (1e-8, 0)])
    with pytest.raises(MalformedMapError):
        build_centerline(tiny, straight(1.0), 4)


def test_centerline_rejects_bad_sample_count():
    with pytest.raises(ValueError):
        build_centerline(straight(1.0), straight(-1.0), 1)


# ---------------------------------------------------------------------------
# lanes_at_point
# ---------------------------------------------------------------------------


def test_lanes_at_centerline_midpoint():
    m = straight_map()
    mid = m.lanes["lane_a"].centerline.point_at(25.0)
    assert "lane_a" in m.lanes_at_point(Point2(mid[0], mid[1]))


def test_lanes_at_point_outside_bounds():
    m = straight_map()
    assert m.lanes_at_point(Point2(500.0, 500.0)) == []


def test_lanes_at_point_junction_overlap_sorted():
    # Two crossing lanes sharing the region around the origin.
    ls = [
        Linestring("ew_l", straight(2.0, -20, 20)),
        Linestring("ew_r", straight(-2.0, -20, 20)),
        Linestring("ns_l", Polyline([(-2, -20), (-2, 20)])),
        Linestring("ns_r", Polyline([(2, -20), (2, 20)])),
    ]
    lanes = [
        make_lane("x_east", ls[0], ls[1]),
        make_lane("x_north", ls[2], ls[3]),
    ]
    m = TrafficMap(linestrings=ls, lanes=lanes)
    assert m.lanes_at_point(Point2(0.0, 0.0)) == ["x_east", "x_north"]


def test_centerline_points_always_inside_own_lane():
    m = straight_map()
    for lane in m.lanes.values():
        s = 0.0
        while s <= lane.centerline.length:
            x, y, _ = lane.centerline.point_at(s)
            assert lane.id in m.lanes_at_point(Point2(x, y)), (lane.id, s)
            s += 0.5


def test_centerline_inside_curved_lane():
    left = arc_polyline(13.0)
    right = arc_polyline(9.0)
    ls = [Linestring("arc_l", left), Linestring("arc_r", right)]
    lane = make_lane("arc_lane", ls[0], ls[1])
    m = TrafficMap(linestrings=ls, lanes=[lane])
    s = 0.0
    while s <= lane.centerline.length:
        x, y, _ = lane.centerline.point_at(s)
        assert ["arc_lane"] == m.lanes_at_point(Point2(x, y))
        s += 0.5


def test_spatial_index_matches_brute_force():
    from roadsim import kernels

    m = straight_map()
    rng = random.Random(7)
    for _ in range(150):
        p = Point2(rng.uniform(-10, 60), rng.uniform(-10, 10))
        brute = sorted(
            lane_id
            for lane_id in m.lanes
            if kernels.point_in_triangles(p.x, p.y, m.lane_strip_triangles(lane_id))
        )
        assert m.lanes_at_point(p) == brute


# ---------------------------------------------------------------------------
# route
# ---------------------------------------------------------------------------


def chain_map():
    ls = [
        Linestring("c0", straight(2.0, 0, 10)),
        Linestring("c1", straight(-2.0, 0, 10)),
        Linestring("c2", straight(2.0, 10, 20)),
        Linestring("c3", straight(-2.0, 10, 20)),
        Linestring("c4", straight(2.0, 20, 30)),
        Linestring("c5", straight(-2.0, 20, 30)),
        Linestring("c6", straight(8.0, 0, 10)),
    ]
    lanes = [
        make_lane("a", ls[0], ls[1], successors=("b",)),
        make_lane("b", ls[2], ls[3], successors=("c",)),
        make_lane("c", ls[4], ls[5]),
        make_lane("island", ls[6], ls[0]),
    ]
    return TrafficMap(linestrings=ls, lanes=lanes)


def test_route_from_equals_to():
    assert chain_map().route("a", "a") == ["a"]


def test_route_chain():
    assert chain_map().route("a", "c") == ["a", "b", "c"]


def test_route_unreachable():
    assert chain_map().route("c", "a") is None
    assert chain_map().route("a", "island") is None


def test_route_unknown_id():
    with pytest.raises(MapLookupError):
        chain_map().route("a", "nope")


def test_route_is_valid_successor_path():
    m = chain_map()
    path = m.route("a", "c")
    for cur, nxt in zip(path, path[1:]):
        assert nxt in m.lanes[cur].successors


def test_route_prefers_smaller_id_on_ties():
    ls = [
        Linestring(f"t{i}", straight(2.0 * i, 0, 10)) for i in range(6)
    ]
    lanes = [
        make_lane("src", ls[0], ls[1], successors=("via_b", "via_a")),
        make_lane("via_a", ls[1], ls[2], successors=("dst",)),
        make_lane("via_b", ls[2], ls[3], successors=("dst",)),
        make_lane("dst", ls[3], ls[4]),
    ]
    m = TrafficMap(linestrings=ls, lanes=lanes)
    assert m.route("src", "dst") == ["src", "via_a", "dst"]


# ---------------------------------------------------------------------------
# footprint_coverage
# ---------------------------------------------------------------------------


def vehicle_box(cx, cy, heading=0.0, length=4.0, width=2.0):
    return box_vertices(OrientedBox(Pose2.of(cx, cy, heading), length, width))


def test_coverage_inside_lane():
    m = straight_map()
    assert m.footprint_coverage(vehicle_box(25.0, 2.0)) == "inside"


def test_coverage_outside():
    m = straight_map()
    assert m.footprint_coverage(vehicle_box(25.0, 100.0)) == "outside"


def test_coverage_partial_straddling_edge():
    m = straight_map()
    # Lane edge at y=4; box half-width 1 centered on the edge.
    assert m.footprint_coverage(vehicle_box(25.0, 4.0)) == "partial"


def test_coverage_inside_implies_vertexwise_containment():
    m = straight_map()
    fp = vehicle_box(25.0, -2.0)
    assert m.footprint_coverage(fp) == "inside"
    for vx, vy in fp.vertices:
        assert m.lanes_at_point(Point2(vx, vy)) or m.areas_at_point(Point2(vx, vy))


def test_coverage_excludes_crosswalk_for_vehicles():
    ls = [
        Linestring("cw_l", straight(2.0, 0, 10)),
        Linestring("cw_r", straight(-2.0, 0, 10)),
    ]
    lanes = [make_lane("cw", ls[0], ls[1], subtype="crosswalk")]
    m = TrafficMap(linestrings=ls, lanes=lanes)
    assert m.footprint_coverage(vehicle_box(5.0, 0.0)) == "outside"
    # ...even though the lane itself is found by the general query
    assert m.lanes_at_point(Point2(5.0, 0.0)) == ["cw"]


def test_coverage_freespace_counts_as_drivable():
    area = AreaRegion("lot", np.array([(0, 0), (30, 0), (30, 20), (0, 20)]), "freespace")
    m = TrafficMap(areas=[area])
    assert m.footprint_coverage(vehicle_box(15.0, 10.0)) == "inside"


def test_coverage_keepout_not_drivable():
    area = AreaRegion("ko", np.array([(0, 0), (30, 0), (30, 20), (0, 20)]), "keepout")
    m = TrafficMap(areas=[area])
    assert m.footprint_coverage(vehicle_box(15.0, 10.0)) == "outside"


# ---------------------------------------------------------------------------
# lane_direction_at
# ---------------------------------------------------------------------------


def test_direction_straight_x():
    m = straight_map()
    assert lane_direction_at(m.lanes["lane_a"], 12.3) == pytest.approx(0.0)


def test_direction_straight_y():
    ls = [
        Linestring("v0", Polyline([(2, 0), (2, 30)])),
        Linestring("v1", Polyline([(-2, 0), (-2, 30)])),
    ]
    # Left boundary of a +y lane is the x=-2 line when facing travel.
    lane = make_lane("up", ls[1], ls[0])
    assert lane_direction_at(lane, 15.0) == pytest.approx(math.pi / 2)


def test_direction_quarter_arc_halfway():
    # Quarter arc R=10 starting at heading 0 and curving left: tangent grows
    # as s/R, so halfway (s = 2.5*pi of the 5*pi total) reads pi/4. Curving
    # left means the inner (R=9) boundary is the left one.
    left = arc_polyline(9.0, n=120, start=-math.pi / 2, cy=10.0)
    right = arc_polyline(11.0, n=120, start=-math.pi / 2, cy=10.0)
    lane = make_lane("arc", Linestring("al", left), Linestring("ar", right))
    got = lane_direction_at(lane, 2.5 * math.pi)
    assert abs(got - math.pi / 4) < 0.02


def test_direction_out_of_range():
    m = straight_map()
    with pytest.raises(ValueError):
        lane_direction_at(m.lanes["lane_a"], -0.1)
    with pytest.raises(ValueError):
        lane_direction_at(m.lanes["lane_a"], 1e9)


# ---------------------------------------------------------------------------
# areas and decomposition
# ---------------------------------------------------------------------------


def test_decompose_convex_ring_single_piece():
    ring = np.array([(0, 0), (4, 0), (4, 3), (0, 3)], dtype=float)
    pieces = decompose_ring(ring)
    assert len(pieces) == 1
    assert pieces[0].area == pytest.approx(12.0)


def test_decompose_l_shape_tiles_area():
    # L-shaped ring, area 3*1 + 1*2 = 5.
    ring = np.array(
        [(0, 0), (3, 0), (3, 1), (1, 1), (1, 3), (0, 3)], dtype=float
    )
    pieces = decompose_ring(ring)
    assert len(pieces) >= 2
    assert sum(p.area for p in pieces) == pytest.approx(5.0, abs=1e-6)


def test_decompose_cw_input_normalized():
    ring = np.array([(0, 0), (0, 3), (4, 3), (4, 0)], dtype=float)  # CW
    area = AreaRegion("r", ring, "freespace")
    assert sum(p.area for p in area.outer) == pytest.approx(12.0)
    assert area.contains(2.0, 1.5)
    assert not area.contains(5.0, 1.5)


def test_area_rejects_bad_subtype():
    with pytest.raises(MalformedMapError):
        AreaRegion("bad", np.array([(0, 0), (1, 0), (1, 1)]), "lawn")


# ---------------------------------------------------------------------------
# map validation
# ---------------------------------------------------------------------------


def test_map_rejects_missing_boundary_ref():
    ls = [Linestring("only", straight(2.0))]
    lane = Lane("broken", "only", "missing", straight(0.0))
    with pytest.raises(MalformedMapError) as err:
        TrafficMap(linestrings=ls, lanes=[lane])
    assert "missing" in str(err.value)


def test_map_rejects_missing_successor():
    ls = [Linestring("s0", straight(2.0)), Linestring("s1", straight(-2.0))]
    lane = make_lane("a", ls[0], ls[1], successors=("ghost",))
    with pytest.raises(MalformedMapError):
        TrafficMap(linestrings=ls, lanes=[lane])


def test_regulatory_light_requires_stop_line():
    with pytest.raises(MalformedMapError):
        RegulatoryElement("sig", "traffic_light_group", governed_lanes=("a",))


def test_map_rejects_missing_regulatory_refs():
    m_ls = [Linestring("r0", straight(2.0)), Linestring("r1", straight(-2.0))]
    lane = make_lane("a", m_ls[0], m_ls[1])
    reg = RegulatoryElement(
        "sig", "traffic_light_group", governed_lanes=("a",), stop_line="nowhere"
    )
    with pytest.raises(MalformedMapError):
        TrafficMap(linestrings=m_ls, lanes=[lane], regulatory=[reg])


def test_lane_rejects_unknown_subtype():
    with pytest.raises(MalformedMapError):
        Lane("l", "a", "b", straight(0.0), subtype="runway")


def test_empty_map_queries():
    m = TrafficMap()
    assert m.lanes_at_point(Point2(0, 0)) == []
    assert m.footprint_coverage(vehicle_box(0, 0)) == "outside"
    assert m.bounds == (0.0, 0.0, 0.0, 0.0)
