"""In-memory road network: lanes, areas, regulatory elements, queries.

The model is lanelet2-flavored: a lane is a pair of boundary linestrings
oriented in the travel direction, with a derived centerline. A TrafficMap is
immutable after construction and safe to share across threads; all queries
are pure.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .errors import MalformedMapError, MapLookupError
from .geometry import ConvexPolygon, Point2, Polyline

LANE_SUBTYPES = frozenset({"road", "highway", "parking_aisle", "bicycle", "crosswalk"})
AREA_SUBTYPES = frozenset({"parking_spot", "keepout", "freespace"})
REGULATORY_KINDS = frozenset(
    {"traffic_light_group", "speed_limit", "right_of_way", "turn_restriction"}
)

# Lane subtypes vehicles may drive on; crosswalk/bicycle are off limits.
VEHICLE_DRIVABLE_SUBTYPES = frozenset({"road", "highway", "parking_aisle"})

GRID_CELL = 10.0  # spatial index cell size, meters
CENTERLINE_STEP = 0.5  # target centerline sample spacing, meters

COVERAGE_INSIDE = "inside"
COVERAGE_PARTIAL = "partial"
COVERAGE_OUTSIDE = "outside"


@dataclass(frozen=True)
class Linestring:
    """A tagged polyline, the map's primitive building block."""

    id: str
    geometry: Polyline
    tags: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Lane:
    """A drivable corridor between two boundary linestrings.

    Boundaries are referenced by id and must be oriented in the lane's
    travel direction. The centerline is derived (see build_centerline).
    """

    id: str
    left_boundary: str
    right_boundary: str
    centerline: Polyline
    subtype: str = "road"
    one_way: bool = True
    speed_limit: Optional[float] = None
    successors: tuple[str, ...] = ()
    adjacent_left: Optional[str] = None
    adjacent_right: Optional[str] = None
    in_junction: bool = False

    def __post_init__(self):
        if self.subtype not in LANE_SUBTYPES:
            raise MalformedMapError(
                f"unknown lane subtype {self.subtype!r}", element_id=self.id
            )


@dataclass(frozen=True, eq=False)
class AreaRegion:
    """A polygonal region (parking spot, keepout, freespace).

    The outer ring may be non-convex; it is decomposed into convex pieces at
    construction so runtime containment stays convex.
    """

    id: str
    ring: np.ndarray  # (n, 2) outer ring, not closed
    subtype: str
    outer: tuple[ConvexPolygon, ...] = ()

    def __post_init__(self):
        if self.subtype not in AREA_SUBTYPES:
            raise MalformedMapError(
                f"unknown area subtype {self.subtype!r}", element_id=self.id
            )
        ring = np.asarray(self.ring, dtype=np.float64)
        if ring.ndim != 2 or ring.shape[1] != 2 or ring.shape[0] < 3:
            raise MalformedMapError(
                "area ring needs at least 3 points", element_id=self.id
            )
        ring = _ccw_ring(ring)
        object.__setattr__(self, "ring", ring)
        self.ring.setflags(write=False)
        if not self.outer:
            object.__setattr__(self, "outer", tuple(decompose_ring(ring)))

    def contains(self, px: float, py: float) -> bool:
        return any(
            kernels.point_in_convex(px, py, piece.vertices) for piece in self.outer
        )


@dataclass(frozen=True)
class RegulatoryElement:
    """Traffic rule attached to lanes: lights, limits, right of way."""

    id: str
    kind: str
    governed_lanes: tuple[str, ...] = ()
    stop_line: Optional[str] = None
    parameters: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in REGULATORY_KINDS:
            raise MalformedMapError(
                f"unknown regulatory kind {self.kind!r}", element_id=self.id
            )
        if self.kind == "traffic_light_group" and self.stop_line is None:
            raise MalformedMapError(
                "traffic_light_group needs exactly one stop_line", element_id=self.id
            )


def _ccw_ring(ring: np.ndarray) -> np.ndarray:
    """Normalize ring orientation to CCW (positive signed area)."""
    x, y = ring[:, 0], ring[:, 1]
    area2 = float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
    if area2 < 0.0:
        return np.ascontiguousarray(ring[::-1])
    return np.ascontiguousarray(ring)


def decompose_ring(ring: np.ndarray) -> list[ConvexPolygon]:
    """Split a CCW simple ring into convex pieces by ear clipping.

    Deterministic: always clips the lowest-index ear. Convex rings come back
    as a single piece.
    """
    pts = [(float(x), float(y)) for x, y in ring]
    n = len(pts)
    if n < 3:
        raise MalformedMapError("ring needs at least 3 points")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    if all(cross(pts[i], pts[(i + 1) % n], pts[(i + 2) % n]) > -1e-9 for i in range(n)):
        return [ConvexPolygon(pts)]

    def in_triangle(p, a, b, c):
        return (
            cross(a, b, p) >= -1e-12
            and cross(b, c, p) >= -1e-12
            and cross(c, a, p) >= -1e-12
        )

    tris: list[ConvexPolygon] = []
    idx = list(range(n))
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * n:
            raise MalformedMapError("ring is self-intersecting or degenerate")
        clipped = False
        for k in range(len(idx)):
            a = pts[idx[k - 1]]
            b = pts[idx[k]]
            c = pts[idx[(k + 1) % len(idx)]]
            if cross(a, b, c) <= 1e-12:
                continue  # reflex or collinear vertex, not an ear
            others = (
                pts[i] for i in idx if i not in (idx[k - 1], idx[k], idx[(k + 1) % len(idx)])
            )
            if any(in_triangle(p, a, b, c) for p in others):
                continue
            tris.append(ConvexPolygon([a, b, c]))
            del idx[k]
            clipped = True
            break
        if not clipped:
            raise MalformedMapError("ring is self-intersecting or degenerate")
    tris.append(ConvexPolygon([pts[idx[0]], pts[idx[1]], pts[idx[2]]]))
    return tris


def build_centerline(left: Polyline, right: Polyline, n_samples: int) -> Polyline:
    """Pointwise midpoint of two boundaries resampled at equal arc fractions."""
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    if left.length < 1e-6 or right.length < 1e-6:
        raise MalformedMapError("degenerate lane boundary (length < 1e-6 m)")
    lpts = left.resample(n_samples).pts
    rpts = right.resample(n_samples).pts
    mid = (lpts + rpts) / 2.0
    try:
        return Polyline.dedupe(mid)
    except ValueError as exc:
        raise MalformedMapError(f"boundaries produce a degenerate centerline: {exc}")


def default_centerline_samples(left: Polyline, right: Polyline) -> int:
    """Sample count from the 0.5 m target spacing on the mean boundary."""
    mean_len = (left.length + right.length) / 2.0
    return max(2, math.ceil(mean_len / CENTERLINE_STEP))


def lane_direction_at(lane: Lane, s: float) -> float:
    """Tangent heading of the centerline segment containing arc length s."""
    if not 0.0 <= s <= lane.centerline.length:
        raise ValueError(
            f"s={s} outside centerline range [0, {lane.centerline.length}]"
        )
    return lane.centerline.heading_at(s)


def _travel_oriented(boundary: Polyline, center: Polyline) -> Polyline:
    """Boundary copy flipped, if needed, to run in the centerline direction.

    Stored linestrings may be digitized against travel; endpoint distances to
    the centerline endpoints decide the orientation.
    """
    c0, c1 = center.pts[0], center.pts[-1]
    b0, b1 = boundary.pts[0], boundary.pts[-1]
    keep = math.hypot(*(b0 - c0)) + math.hypot(*(b1 - c1))
    flip = math.hypot(*(b1 - c0)) + math.hypot(*(b0 - c1))
    return boundary.reversed() if flip < keep else boundary


def _lane_strip_triangles(left: Polyline, right: Polyline, n_samples: int) -> np.ndarray:
    """CCW triangles tiling the strip between matched boundary samples."""
    lpts = left.resample(n_samples).pts
    rpts = right.resample(n_samples).pts
    tris: list[tuple] = []
    for i in range(n_samples - 1):
        quad = (lpts[i], rpts[i], rpts[i + 1], lpts[i + 1])
        for a, b, c in ((quad[0], quad[1], quad[2]), (quad[0], quad[2], quad[3])):
            area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if abs(area2) < 1e-12:
                continue
            if area2 > 0:
                tris.append((a, b, c))
            else:
                tris.append((a, c, b))
    if not tris:
        raise MalformedMapError("lane strip is degenerate")
    return np.ascontiguousarray(np.asarray(tris, dtype=np.float64))


class TrafficMap:
    """Immutable road network with a uniform-grid spatial index.

    The index maps 10 m cells to the lane/area ids whose bounding box covers
    the cell, so a single-cell lookup always yields a superset of the true
    hits; exact containment confirms.
    """

    def __init__(
        self,
        linestrings: Sequence[Linestring] = (),
        lanes: Sequence[Lane] = (),
        areas: Sequence[AreaRegion] = (),
        regulatory: Sequence[RegulatoryElement] = (),
        warnings: Sequence[str] = (),
    ):
        self.linestrings = {ls.id: ls for ls in linestrings}
        self.lanes = {ln.id: ln for ln in lanes}
        self.areas = {ar.id: ar for ar in areas}
        self.regulatory = {re.id: re for re in regulatory}
        self.warnings = tuple(warnings)
        for table, items in (
            (self.linestrings, linestrings),
            (self.lanes, lanes),
            (self.areas, areas),
            (self.regulatory, regulatory),
        ):
            if len(table) != len(items):
                raise MalformedMapError("duplicate element id in map")
        self._validate_references()
        self._lane_tris: dict[str, np.ndarray] = {}
        for lane in self.lanes.values():
            left = _travel_oriented(
                self.linestrings[lane.left_boundary].geometry, lane.centerline
            )
            right = _travel_oriented(
                self.linestrings[lane.right_boundary].geometry, lane.centerline
            )
            n = default_centerline_samples(left, right)
            self._lane_tris[lane.id] = _lane_strip_triangles(left, right, n)
            mean_len = (left.length + right.length) / 2.0
            if mean_len > 0 and not 0.8 <= lane.centerline.length / mean_len <= 1.2:
                raise MalformedMapError(
                    "centerline length deviates more than 20% from boundaries",
                    element_id=lane.id,
                )
        self.bounds = self._compute_bounds()
        self._grid: dict[
            tuple[int, int],
            tuple[list[tuple[str, np.ndarray]], list[str]],
        ] = {}
        self._build_index()
        self._has_junction_lanes = any(
            lane.in_junction for lane in self.lanes.values()
        )

    def _validate_references(self) -> None:
        for lane in self.lanes.values():
            for ref in (lane.left_boundary, lane.right_boundary):
                if ref not in self.linestrings:
                    raise MalformedMapError(
                        f"lane references missing linestring {ref!r}",
                        element_id=lane.id,
                    )
            for ref in lane.successors:
                if ref not in self.lanes:
                    raise MalformedMapError(
                        f"lane references missing successor {ref!r}",
                        element_id=lane.id,
                    )
            for ref in (lane.adjacent_left, lane.adjacent_right):
                if ref is not None and ref not in self.lanes:
                    raise MalformedMapError(
                        f"lane references missing neighbor {ref!r}",
                        element_id=lane.id,
                    )
        for reg in self.regulatory.values():
            if reg.stop_line is not None and reg.stop_line not in self.linestrings:
                raise MalformedMapError(
                    f"regulatory element references missing stop line "
                    f"{reg.stop_line!r}",
                    element_id=reg.id,
                )
            for ref in reg.governed_lanes:
                if ref not in self.lanes:
                    raise MalformedMapError(
                        f"regulatory element references missing lane {ref!r}",
                        element_id=reg.id,
                    )

    def _compute_bounds(self) -> tuple[float, float, float, float]:
        xs: list[float] = []
        ys: list[float] = []
        for ls in self.linestrings.values():
            xs.extend((float(ls.geometry.pts[:, 0].min()), float(ls.geometry.pts[:, 0].max())))
            ys.extend((float(ls.geometry.pts[:, 1].min()), float(ls.geometry.pts[:, 1].max())))
        for ar in self.areas.values():
            xs.extend((float(ar.ring[:, 0].min()), float(ar.ring[:, 0].max())))
            ys.extend((float(ar.ring[:, 1].min()), float(ar.ring[:, 1].max())))
        if not xs:
            return (0.0, 0.0, 0.0, 0.0)
        return (min(xs), min(ys), max(xs), max(ys))

    def _cells_for_bbox(self, xmin, ymin, xmax, ymax):
        ix0 = math.floor(xmin / GRID_CELL)
        ix1 = math.floor(xmax / GRID_CELL)
        iy0 = math.floor(ymin / GRID_CELL)
        iy1 = math.floor(ymax / GRID_CELL)
        for ix in range(ix0, ix1 + 1):
            for iy in range(iy0, iy1 + 1):
                yield ix, iy

    def _build_index(self) -> None:
        # Triangles are indexed individually so a point probe only scans
        # geometry reaching its cell, not whole-lane strips (a long lane can
        # contribute thousands of triangles but only a handful per cell).
        for lane_id in sorted(self.lanes):
            tris = self._lane_tris[lane_id]
            per_cell: dict[tuple[int, int], list[int]] = {}
            for k, tri in enumerate(tris.reshape(-1, 6).tolist()):
                xs = tri[0::2]
                ys = tri[1::2]
                for cell in self._cells_for_bbox(
                    min(xs), min(ys), max(xs), max(ys)
                ):
                    per_cell.setdefault(cell, []).append(k)
            for cell, idxs in per_cell.items():
                self._grid.setdefault(cell, ([], []))[0].append(
                    (lane_id, np.ascontiguousarray(tris[idxs]))
                )
        for area_id in sorted(self.areas):
            ring = self.areas[area_id].ring
            for cell in self._cells_for_bbox(
                ring[:, 0].min(), ring[:, 1].min(), ring[:, 0].max(), ring[:, 1].max()
            ):
                self._grid.setdefault(cell, ([], []))[1].append(area_id)
        # Drivability is queried far more often than lane identity, so each
        # cell also stores the concatenated triangles of its vehicle-drivable
        # lanes (one point-in-triangles call instead of one per lane) plus the
        # freespace area ids that still need an exact ring test.
        self._drive_cells: dict[
            tuple[int, int], tuple[Optional[np.ndarray], tuple[str, ...]]
        ] = {}
        for cell, (lane_entries, area_ids) in self._grid.items():
            tris_parts = [
                sub
                for lane_id, sub in lane_entries
                if self.lanes[lane_id].subtype in VEHICLE_DRIVABLE_SUBTYPES
            ]
            free = tuple(
                aid for aid in area_ids if self.areas[aid].subtype == "freespace"
            )
            if tris_parts or free:
                self._drive_cells[cell] = (
                    np.concatenate(tris_parts) if tris_parts else None,
                    free,
                )

    def _cell(self, px: float, py: float):
        return self._grid.get(
            (math.floor(px / GRID_CELL), math.floor(py / GRID_CELL)), ((), ())
        )

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------

    def lanes_at_point(self, p: Point2) -> list[str]:
        """Ids of all lanes whose boundary strip contains p, sorted."""
        lane_entries, _ = self._cell(p.x, p.y)
        px, py = p.x, p.y
        return [
            lane_id
            for lane_id, tris in lane_entries
            if kernels.point_in_triangles(px, py, tris)
        ]

    def areas_at_point(self, p: Point2) -> list[str]:
        """Ids of all areas containing p, sorted."""
        _, area_ids = self._cell(p.x, p.y)
        return [aid for aid in area_ids if self.areas[aid].contains(p.x, p.y)]

    def _point_drivable(self, px: float, py: float) -> bool:
        entry = self._drive_cells.get(
            (math.floor(px / GRID_CELL), math.floor(py / GRID_CELL))
        )
        if entry is None:
            return False
        tris, free_ids = entry
        if tris is not None and kernels.point_in_triangles(px, py, tris):
            return True
        for area_id in free_ids:
            if self.areas[area_id].contains(px, py):
                return True
        return False

    def footprint_coverage(self, footprint: ConvexPolygon) -> str:
        """inside / partial / outside of the drivable union.

        Tests every footprint vertex plus the centroid: inside means all
        pass, outside means none do (mixed results short-circuit).
        """
        cx, cy = footprint._centroid_xy()
        xs = footprint.vertices[:, 0].tolist()
        ys = footprint.vertices[:, 1].tolist()
        xs.append(cx)
        ys.append(cy)
        # Inlined _point_drivable: probe points cluster in one or two cells,
        # so the cell entry is reused until the key changes.
        get = self._drive_cells.get
        floor = math.floor
        in_tris = kernels.point_in_triangles
        last_key = entry = None
        seen_in = seen_out = False
        for px, py in zip(xs, ys):
            key = (floor(px / GRID_CELL), floor(py / GRID_CELL))
            if key != last_key:
                entry = get(key)
                last_key = key
            drivable = False
            if entry is not None:
                tris, free_ids = entry
                drivable = tris is not None and in_tris(px, py, tris)
                if not drivable:
                    for aid in free_ids:
                        if self.areas[aid].contains(px, py):
                            drivable = True
                            break
            if drivable:
                seen_in = True
            else:
                seen_out = True
            if seen_in and seen_out:
                return COVERAGE_PARTIAL
        return COVERAGE_INSIDE if seen_in else COVERAGE_OUTSIDE

    def route(self, from_lane: str, to_lane: str) -> Optional[list[str]]:
        """Shortest successor path by lane count (BFS, smallest-id ties)."""
        for lane_id in (from_lane, to_lane):
            if lane_id not in self.lanes:
                raise MapLookupError(f"unknown lane id {lane_id!r}")
        if from_lane == to_lane:
            return [from_lane]
        parents: dict[str, str] = {from_lane: from_lane}
        queue = deque([from_lane])
        while queue:
            current = queue.popleft()
            for succ in sorted(self.lanes[current].successors):
                if succ in parents:
                    continue
                parents[succ] = current
                if succ == to_lane:
                    path = [succ]
                    while path[-1] != from_lane:
                        path.append(parents[path[-1]])
                    return path[::-1]
                queue.append(succ)
        return None

    def lane_strip_triangles(self, lane_id: str) -> np.ndarray:
        """Containment triangles of a lane's boundary strip (read-only)."""
        if lane_id not in self._lane_tris:
            raise MapLookupError(f"unknown lane id {lane_id!r}")
        return self._lane_tris[lane_id]

    def __repr__(self) -> str:
        return (
            f"TrafficMap({len(self.lanes)} lanes, {len(self.linestrings)} "
            f"linestrings, {len(self.areas)} areas, {len(self.regulatory)} "
            f"regulatory)"
        )
