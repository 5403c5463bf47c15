"""Core 2D primitives: frames, polylines, convex shapes, overlap and raycasts.

All types are immutable value objects and all operations are pure functions,
so everything here is safe to share across threads. Angles are radians
normalized to (-pi, pi]; distances are meters. Touching boundaries count as
overlap (conservative collision semantics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import kernels

# Identity tolerance for geometric comparisons (double-precision noise floor).
GEOM_EPS = 1e-9


def normalize_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return kernels.norm_angle(a)


def angle_diff(a: float, b: float) -> float:
    """Signed shortest-arc difference a - b, in (-pi, pi]."""
    return kernels.norm_angle(a - b)


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite coordinate: {v!r}")


@dataclass(frozen=True, slots=True)
class Point2:
    """A point in the world frame."""

    x: float
    y: float

    def __post_init__(self):
        _check_finite(self.x, self.y)

    def distance_to(self, other: "Point2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


@dataclass(frozen=True, slots=True)
class Pose2:
    """Position plus heading; heading normalized to (-pi, pi]."""

    position: Point2
    heading: float

    def __post_init__(self):
        _check_finite(self.heading)
        object.__setattr__(self, "heading", kernels.norm_angle(self.heading))

    @classmethod
    def of(cls, x: float, y: float, heading: float = 0.0) -> "Pose2":
        return cls(Point2(x, y), heading)

    @property
    def x(self) -> float:
        return self.position.x

    @property
    def y(self) -> float:
        return self.position.y


def _as_points_array(points: Union[np.ndarray, Sequence]) -> np.ndarray:
    if isinstance(points, np.ndarray):
        arr = np.ascontiguousarray(points, dtype=np.float64)
    else:
        rows = [(p.x, p.y) if isinstance(p, Point2) else (p[0], p[1]) for p in points]
        arr = np.array(rows, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("expected an (n, 2) array of points")
    if not np.isfinite(arr).all():
        raise ValueError("non-finite coordinates")
    return arr


class Polyline:
    """An ordered point chain with cumulative arc lengths.

    Consecutive points must be distinct (> 1e-9 m apart) which makes the
    cumulative lengths strictly increasing.
    """

    __slots__ = ("pts", "cum")

    def __init__(self, points: Union[np.ndarray, Sequence]):
        pts = _as_points_array(points)
        if pts.shape[0] < 2:
            raise ValueError("polyline needs at least 2 points")
        seg = np.sqrt(((pts[1:] - pts[:-1]) ** 2).sum(axis=1))
        if (seg <= GEOM_EPS).any():
            raise ValueError("consecutive polyline points must be distinct")
        cum = np.empty(pts.shape[0], dtype=np.float64)
        cum[0] = 0.0
        np.cumsum(seg, out=cum[1:])
        self.pts = pts
        self.pts.setflags(write=False)
        self.cum = cum
        self.cum.setflags(write=False)

    @classmethod
    def dedupe(cls, points: Union[np.ndarray, Sequence]) -> "Polyline":
        """Build a polyline dropping consecutive near-duplicate points."""
        pts = _as_points_array(points)
        keep = [0]
        for i in range(1, pts.shape[0]):
            d = pts[i] - pts[keep[-1]]
            if math.sqrt(d[0] * d[0] + d[1] * d[1]) > GEOM_EPS:
                keep.append(i)
        return cls(pts[keep])

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    def __len__(self) -> int:
        return self.pts.shape[0]

    def point_at(self, s: float) -> tuple[float, float, float]:
        """(x, y, tangent heading) at arc length s, clamped to [0, length]."""
        return kernels.polyline_point_at(self.pts, self.cum, s)

    def heading_at(self, s: float) -> float:
        return kernels.polyline_point_at(self.pts, self.cum, s)[2]

    def resample(self, n: int) -> "Polyline":
        """Resample at n equal arc-length fractions (endpoints included)."""
        if n < 2:
            raise ValueError("resample needs n >= 2")
        total = self.length
        out = np.empty((n, 2), dtype=np.float64)
        for k in range(n):
            s = total * k / (n - 1)
            x, y, _ = kernels.polyline_point_at(self.pts, self.cum, s)
            out[k, 0] = x
            out[k, 1] = y
        return Polyline(out)

    def reversed(self) -> "Polyline":
        return Polyline(self.pts[::-1])

    def segments(self) -> np.ndarray:
        """All segments as an (n-1, 4) array of (ax, ay, bx, by)."""
        return np.ascontiguousarray(
            np.hstack([self.pts[:-1], self.pts[1:]]), dtype=np.float64
        )

    def __repr__(self) -> str:
        return f"Polyline({len(self)} pts, {self.length:.2f} m)"


class ConvexPolygon:
    """A strictly convex polygon with CCW-ordered vertices."""

    __slots__ = ("vertices", "_centroid_cache")

    def __init__(self, vertices: Union[np.ndarray, Sequence]):
        v = _as_points_array(vertices)
        n = v.shape[0]
        if n < 3:
            raise ValueError("polygon needs at least 3 vertices")
        mx, my = v.mean(axis=0)
        area2 = 0.0
        for i in range(n):
            j = (i + 1) % n
            area2 += (v[i, 0] - mx) * (v[j, 1] - my) - (v[j, 0] - mx) * (v[i, 1] - my)
        if area2 <= 0.0:
            raise ValueError("polygon vertices must be CCW ordered")
        for i in range(n):
            j = (i + 1) % n
            k = (j + 1) % n
            cr = (v[j, 0] - v[i, 0]) * (v[k, 1] - v[j, 1]) - (v[j, 1] - v[i, 1]) * (
                v[k, 0] - v[j, 0]
            )
            if cr < -GEOM_EPS:
                raise ValueError("polygon is not convex")
        self.vertices = v
        self.vertices.setflags(write=False)
        self._centroid_cache = None

    @classmethod
    def _trusted(cls, vertices: np.ndarray) -> "ConvexPolygon":
        """Skip validation for vertices CCW-convex by construction."""
        poly = cls.__new__(cls)
        vertices.setflags(write=False)
        poly.vertices = vertices
        poly._centroid_cache = None
        return poly

    @property
    def area(self) -> float:
        # Shoelace about the vertex mean: cancellation-free far from origin.
        v = self.vertices - self.vertices.mean(axis=0)
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    def _centroid_xy(self) -> tuple[float, float]:
        # area-weighted polygon centroid, evaluated about the vertex mean
        # (scalar arithmetic: these are tiny arrays on a hot path)
        if self._centroid_cache is not None:
            return self._centroid_cache
        xs = self.vertices[:, 0].tolist()
        ys = self.vertices[:, 1].tolist()
        n = len(xs)
        mx, my = sum(xs) / n, sum(ys) / n
        a2 = cx6 = cy6 = 0.0
        for i in range(n):
            j = i + 1 if i + 1 < n else 0
            x0, y0 = xs[i] - mx, ys[i] - my
            x1, y1 = xs[j] - mx, ys[j] - my
            cross = x0 * y1 - x1 * y0
            a2 += cross
            cx6 += (x0 + x1) * cross
            cy6 += (y0 + y1) * cross
        self._centroid_cache = (cx6 / (3.0 * a2) + mx, cy6 / (3.0 * a2) + my)
        return self._centroid_cache

    @property
    def centroid(self) -> Point2:
        cx, cy = self._centroid_xy()
        return Point2(cx, cy)

    def contains(self, p: Point2, eps: float = GEOM_EPS) -> bool:
        return kernels.point_in_convex(p.x, p.y, self.vertices, eps)

    def segments(self) -> np.ndarray:
        v = self.vertices
        return np.ascontiguousarray(
            np.hstack([v, np.roll(v, -1, axis=0)]), dtype=np.float64
        )

    def translated(self, dx: float, dy: float) -> "ConvexPolygon":
        return ConvexPolygon(self.vertices + np.array([dx, dy]))

    def __repr__(self) -> str:
        return f"ConvexPolygon({self.vertices.shape[0]} verts)"


@dataclass(frozen=True, slots=True)
class OrientedBox:
    """A rectangle given by center pose, length (along heading) and width."""

    center: Pose2
    length: float
    width: float

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ValueError("box dimensions must be positive")
        _check_finite(self.length, self.width)

    def to_polygon(self) -> ConvexPolygon:
        return box_vertices(self)

    @property
    def circumradius(self) -> float:
        return 0.5 * math.hypot(self.length, self.width)


@dataclass(frozen=True, slots=True)
class Circle:
    """A disc; used as the footprint of pedestrians."""

    center: Point2
    radius: float

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError("radius must be positive and finite")


Footprint = Union[ConvexPolygon, Circle]


def box_vertices(box: OrientedBox) -> ConvexPolygon:
    """Corner polygon of an oriented box, CCW starting front-left."""
    c, s = math.cos(box.center.heading), math.sin(box.center.heading)
    hl, hw = box.length / 2.0, box.width / 2.0
    local = ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))
    verts = np.array(
        [
            (box.center.x + lx * c - ly * s, box.center.y + lx * s + ly * c)
            for lx, ly in local
        ],
        dtype=np.float64,
    )
    return ConvexPolygon._trusted(verts)


def convex_overlap(a: ConvexPolygon, b: ConvexPolygon) -> bool:
    """Separating-axis overlap test; touching boundaries count as overlap."""
    return kernels.convex_overlap(a.vertices, b.vertices)


def circle_polygon_overlap(c: Circle, p: ConvexPolygon) -> bool:
    """True iff the disc reaches the polygon (touching counts)."""
    return kernels.circle_polygon_overlap(c.center.x, c.center.y, c.radius, p.vertices)


def circle_circle_overlap(a: Circle, b: Circle) -> bool:
    return a.center.distance_to(b.center) <= a.radius + b.radius + kernels.TOUCH_EPS


def footprints_overlap(a: Footprint, b: Footprint) -> bool:
    """Overlap test dispatching on footprint kinds."""
    if isinstance(a, Circle):
        if isinstance(b, Circle):
            return circle_circle_overlap(a, b)
        return circle_polygon_overlap(a, b)
    if isinstance(b, Circle):
        return circle_polygon_overlap(b, a)
    return kernels.convex_overlap(a.vertices, b.vertices)


Segment = tuple[float, float, float, float]
Obstacle = Union[Segment, ConvexPolygon, OrientedBox, Polyline]


def obstacle_segments(obstacles: Iterable[Obstacle]) -> np.ndarray:
    """Flatten mixed obstacles into a single (n, 4) segment array."""
    chunks = []
    for ob in obstacles:
        if isinstance(ob, OrientedBox):
            chunks.append(ob.to_polygon().segments())
        elif isinstance(ob, ConvexPolygon):
            chunks.append(ob.segments())
        elif isinstance(ob, Polyline):
            chunks.append(ob.segments())
        else:
            ax, ay, bx, by = ob
            chunks.append(np.array([[ax, ay, bx, by]], dtype=np.float64))
    if not chunks:
        return np.empty((0, 4), dtype=np.float64)
    return np.ascontiguousarray(np.vstack(chunks), dtype=np.float64)


def raycast(
    origin: Point2,
    direction: float,
    max_range: float,
    obstacles: Iterable[Obstacle],
) -> Optional[float]:
    """Distance to the first obstacle hit along a ray, None when no hit.

    Hits beyond max_range do not count. Segments exactly parallel to the ray
    are never hit.
    """
    if max_range <= 0:
        raise ValueError("max_range must be positive")
    segs = obstacle_segments(obstacles)
    if segs.shape[0] == 0:
        return None
    t = kernels.raycast_segments(
        origin.x, origin.y, math.cos(direction), math.sin(direction), segs
    )
    return float(t) if t <= max_range else None


def to_local_frame(points: Iterable[Point2], frame: Pose2) -> list[Point2]:
    """Rigid transform into the frame: its origin maps to (0,0), heading to +x."""
    c, s = math.cos(frame.heading), math.sin(frame.heading)
    out = []
    for p in points:
        dx = p.x - frame.x
        dy = p.y - frame.y
        out.append(Point2(dx * c + dy * s, -dx * s + dy * c))
    return out


def to_world_frame(points: Iterable[Point2], frame: Pose2) -> list[Point2]:
    """Inverse of to_local_frame."""
    c, s = math.cos(frame.heading), math.sin(frame.heading)
    return [
        Point2(frame.x + p.x * c - p.y * s, frame.y + p.x * s + p.y * c)
        for p in points
    ]


def transform_array_to_local(pts: np.ndarray, frame: Pose2) -> np.ndarray:
    """Array version of to_local_frame for (n, 2) inputs."""
    c, s = math.cos(frame.heading), math.sin(frame.heading)
    dx = pts[:, 0] - frame.x
    dy = pts[:, 1] - frame.y
    return np.ascontiguousarray(
        np.stack([dx * c + dy * s, -dx * s + dy * c], axis=1), dtype=np.float64
    )


def project_to_polyline(p: Point2, line: Polyline) -> tuple[float, float, int]:
    """Project a point onto a polyline.

    Returns (s, d, segment index): arc length of the closest point in
    [0, length], the signed lateral offset (positive left of the travel
    direction), and the index of the closest segment.
    """
    return kernels.project_polyline(p.x, p.y, line.pts, line.cum)
