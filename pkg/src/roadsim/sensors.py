"""Observation modalities: BEV semantic grid, 2D lidar, vectorized polylines.

All sensors are pure functions of an immutable world snapshot (a WorldView)
and are frame-invariant: a global rigid transform of the world leaves the
observations unchanged because everything is expressed in the agent frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import kernels
from .agents import ParticipantSpec, ParticipantState, WorldView, footprint_of
from .errors import ConfigError, MapLookupError
from .geometry import Circle, Point2, Polyline, Pose2
from .map_model import VEHICLE_DRIVABLE_SUBTYPES

BEV_CLASSES = (
    "drivable", "lane_marking", "vehicle", "pedestrian_cyclist", "ego", "area"
)
VECTOR_CLASSES = (
    "lane_boundary", "lane_centerline", "vehicle", "pedestrian_cyclist"
)
VEHICLE_CLASSES = {"car", "truck"}

MARKING_HALF_WIDTH_CELLS = 0.5  # one-cell-wide boundary strokes
LIDAR_DISC_SEGMENTS = 32  # pedestrian disc approximation for raycasts
VECTOR_DISC_SEGMENTS = 8  # coarser outline for the vector modality


def default_palette() -> dict[str, int]:
    return {name: i for i, name in enumerate(BEV_CLASSES)}


@dataclass(frozen=True)
class BevSpec:
    """Bird's-eye-view grid: one binary channel per semantic class."""

    width_px: int = 128
    height_px: int = 128
    resolution: float = 0.2  # meters per pixel
    palette: Mapping[str, int] = field(default_factory=default_palette)

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ConfigError("grid dimensions must be positive")
        if not (math.isfinite(self.resolution) and self.resolution > 0):
            raise ConfigError("resolution must be positive")
        if set(self.palette) != set(BEV_CLASSES):
            raise ConfigError("palette must map exactly the known classes")
        if sorted(self.palette.values()) != list(range(len(self.palette))):
            raise ConfigError("palette channel indices must be dense from 0")

    @property
    def n_channels(self) -> int:
        return len(self.palette)


@dataclass(frozen=True)
class LidarSpec:
    """Planar lidar fanning beams across fov centered on the agent heading."""

    n_beams: int = 36
    fov: float = 2.0 * math.pi
    max_range: float = 50.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.n_beams < 1:
            raise ConfigError("need at least one beam")
        if not 0.0 < self.fov <= 2.0 * math.pi + 1e-12:
            raise ConfigError("fov must be in (0, 2*pi]")
        if not (math.isfinite(self.max_range) and self.max_range > 0):
            raise ConfigError("max_range must be positive")
        if not (math.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise ConfigError("noise_sigma must be nonnegative")


@dataclass(frozen=True)
class VectorSpec:
    """Vectorized polyline observation budget."""

    radius: float = 50.0
    max_polylines: int = 64
    max_vectors_per_polyline: int = 16

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ConfigError("radius must be positive")
        if self.max_polylines <= 0 or self.max_vectors_per_polyline <= 0:
            raise ConfigError("vector budgets must be positive")


@dataclass(frozen=True)
class VectorFeature:
    """One directed segment in the agent frame."""

    start: Point2
    end: Point2
    semantic: str
    polyline_index: int


def _require_agent(view: WorldView, agent_id: str) -> ParticipantState:
    if agent_id not in view.states:
        raise MapLookupError(f"unknown agent {agent_id!r}")
    return view.states[agent_id]


def _to_grid(pts: np.ndarray, pose: Pose2, spec: BevSpec) -> np.ndarray:
    """World points -> continuous grid coords; agent centered, heading up."""
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    dx = pts[:, 0] - pose.x
    dy = pts[:, 1] - pose.y
    fwd = dx * c + dy * s
    left = -dx * s + dy * c
    gx = 0.5 * spec.width_px - left / spec.resolution
    gy = 0.5 * spec.height_px - fwd / spec.resolution
    return np.ascontiguousarray(np.stack([gx, gy], axis=1))


def _fill_footprint(
    mask: np.ndarray,
    spec: ParticipantSpec,
    state: ParticipantState,
    pose: Pose2,
    bev: BevSpec,
) -> None:
    fp = footprint_of(spec, state)
    if isinstance(fp, Circle):
        center = _to_grid(np.array([[fp.center.x, fp.center.y]]), pose, bev)
        gx, gy = center[0]
        kernels.fill_capsule_cells(
            mask, gx, gy, gx, gy, fp.radius / bev.resolution
        )
    else:
        kernels.fill_convex_cells(mask, _to_grid(fp.vertices, pose, bev))


def render_bev(view: WorldView, agent_id: str, spec: BevSpec) -> np.ndarray:
    """Rasterize the scene around an agent into binary class channels.

    The grid is centered on the agent and rotated so its heading points to
    the top edge; a cell is set iff its center lies inside the primitive.
    Returns (height_px, width_px, n_channels) uint8 in {0, 1}.
    """
    me = _require_agent(view, agent_id)
    planes = np.zeros(
        (spec.n_channels, spec.height_px, spec.width_px), dtype=np.uint8
    )

    def plane(name: str) -> np.ndarray:
        return planes[spec.palette[name]]

    tmap = view.tmap
    if tmap is not None:
        drivable = plane("drivable")
        for lane_id in sorted(tmap.lanes):
            if tmap.lanes[lane_id].subtype not in VEHICLE_DRIVABLE_SUBTYPES:
                continue
            tris = tmap.lane_strip_triangles(lane_id)
            grid_tris = _to_grid(tris.reshape(-1, 2), me.pose, spec).reshape(
                tris.shape
            )
            for tri in grid_tris:
                kernels.fill_convex_cells(drivable, tri)
        area_plane = plane("area")
        for area_id in sorted(tmap.areas):
            area = tmap.areas[area_id]
            for piece in area.outer:
                grid_piece = _to_grid(piece.vertices, me.pose, spec)
                kernels.fill_convex_cells(area_plane, grid_piece)
                if area.subtype == "freespace":  # part of the drivable union
                    kernels.fill_convex_cells(drivable, grid_piece)
        marking = plane("lane_marking")
        boundary_ids = sorted(
            {b for ln in tmap.lanes.values()
             for b in (ln.left_boundary, ln.right_boundary)}
        )
        for ls_id in boundary_ids:
            pts = _to_grid(tmap.linestrings[ls_id].geometry.pts, me.pose, spec)
            for i in range(pts.shape[0] - 1):
                kernels.fill_capsule_cells(
                    marking, pts[i, 0], pts[i, 1], pts[i + 1, 0], pts[i + 1, 1],
                    MARKING_HALF_WIDTH_CELLS,
                )

    for pid in sorted(view.states):
        if pid == agent_id:
            continue
        cls = view.specs[pid].participant_class
        name = "vehicle" if cls in VEHICLE_CLASSES else "pedestrian_cyclist"
        _fill_footprint(plane(name), view.specs[pid], view.states[pid],
                        me.pose, spec)
    _fill_footprint(plane("ego"), view.specs[agent_id], me, me.pose, spec)
    return np.ascontiguousarray(np.transpose(planes, (1, 2, 0)))


def _disc_polygon(circle: Circle, n: int) -> np.ndarray:
    angles = 2.0 * math.pi * np.arange(n) / n
    return np.ascontiguousarray(
        np.stack(
            [circle.center.x + circle.radius * np.cos(angles),
             circle.center.y + circle.radius * np.sin(angles)],
            axis=1,
        )
    )


def _polygon_segments(verts: np.ndarray) -> np.ndarray:
    nxt = np.roll(verts, -1, axis=0)
    return np.ascontiguousarray(np.concatenate([verts, nxt], axis=1))


def _participant_segments(
    view: WorldView, skip_id: str, disc_segments: int
) -> list[np.ndarray]:
    chunks = []
    for pid in sorted(view.states):
        if pid == skip_id:
            continue
        fp = footprint_of(view.specs[pid], view.states[pid])
        if isinstance(fp, Circle):
            chunks.append(_polygon_segments(_disc_polygon(fp, disc_segments)))
        else:
            chunks.append(_polygon_segments(fp.vertices))
    return chunks


def beam_angles(heading: float, spec: LidarSpec) -> np.ndarray:
    """Beam directions, evenly spaced over fov centered on the heading."""
    if spec.n_beams == 1:
        return np.array([heading], dtype=np.float64)
    k = np.arange(spec.n_beams, dtype=np.float64)
    return heading - 0.5 * spec.fov + k * spec.fov / (spec.n_beams - 1)


def scan_lidar(
    view: WorldView,
    agent_id: str,
    spec: LidarSpec,
    rng: Optional[np.random.Generator] = None,
    include_map: bool = False,
) -> np.ndarray:
    """Range per beam against other participants (max_range where no hit).

    With include_map=True, lane boundaries and area rings also return hits.
    Gaussian noise of noise_sigma is added per beam, then ranges are clamped
    to [0, max_range]; sigma 0 never draws from the rng.
    """
    me = _require_agent(view, agent_id)
    chunks = _participant_segments(view, agent_id, LIDAR_DISC_SEGMENTS)
    if include_map and view.tmap is not None:
        tmap = view.tmap
        boundary_ids = sorted(
            {b for ln in tmap.lanes.values()
             for b in (ln.left_boundary, ln.right_boundary)}
        )
        for ls_id in boundary_ids:
            pts = tmap.linestrings[ls_id].geometry.pts
            chunks.append(
                np.concatenate([pts[:-1], pts[1:]], axis=1)
            )
        for area_id in sorted(tmap.areas):
            chunks.append(_polygon_segments(tmap.areas[area_id].ring))
    if chunks:
        segs = np.ascontiguousarray(np.vstack(chunks), dtype=np.float64)
    else:
        segs = np.empty((0, 4), dtype=np.float64)
    angles = np.ascontiguousarray(beam_angles(me.pose.heading, spec))
    ranges = np.asarray(
        kernels.scan_rays(me.pose.x, me.pose.y, angles, segs, spec.max_range)
    )
    if spec.noise_sigma > 0.0:
        if rng is None:
            raise ConfigError("noisy lidar needs an rng")
        ranges = ranges + rng.normal(0.0, spec.noise_sigma, spec.n_beams)
        ranges = np.clip(ranges, 0.0, spec.max_range)
    return ranges


def _candidate_polylines(
    view: WorldView, agent_id: str
) -> list[tuple[str, str, np.ndarray]]:
    """(sort id, semantic class, world points) for every vector source."""
    out = []
    tmap = view.tmap
    if tmap is not None:
        boundary_ids = sorted(
            {b for ln in tmap.lanes.values()
             for b in (ln.left_boundary, ln.right_boundary)}
        )
        for ls_id in boundary_ids:
            out.append(
                (ls_id, "lane_boundary", tmap.linestrings[ls_id].geometry.pts)
            )
        for lane_id in sorted(tmap.lanes):
            out.append(
                (f"{lane_id}:center", "lane_centerline",
                 tmap.lanes[lane_id].centerline.pts)
            )
    for pid in sorted(view.states):
        if pid == agent_id:
            continue
        cls = view.specs[pid].participant_class
        semantic = "vehicle" if cls in VEHICLE_CLASSES else "pedestrian_cyclist"
        fp = footprint_of(view.specs[pid], view.states[pid])
        if isinstance(fp, Circle):
            ring = _disc_polygon(fp, VECTOR_DISC_SEGMENTS)
        else:
            ring = fp.vertices
        closed = np.concatenate([ring, ring[:1]], axis=0)
        out.append((pid, semantic, closed))
    return out


def vectorize(
    view: WorldView, agent_id: str, spec: VectorSpec
) -> list[VectorFeature]:
    """Nearby polylines as directed agent-frame segments.

    Polylines whose closest point lies within radius are kept, ordered by
    that distance then id, truncated at max_polylines; each contributes at
    most max_vectors_per_polyline consecutive vectors (resampled when
    longer), and only vectors whose midpoint is within radius survive.
    """
    me = _require_agent(view, agent_id)
    px, py = me.pose.x, me.pose.y
    near = []
    for sort_id, semantic, pts in _candidate_polylines(view, agent_id):
        dist = kernels.min_distance_polyline(px, py, pts)
        if dist <= spec.radius:
            near.append((dist, sort_id, semantic, pts))
    near.sort(key=lambda item: (item[0], item[1]))
    del near[spec.max_polylines:]

    features = []
    c, s = math.cos(me.pose.heading), math.sin(me.pose.heading)
    for index, (_, _, semantic, pts) in enumerate(near):
        if pts.shape[0] - 1 > spec.max_vectors_per_polyline:
            pts = Polyline(pts).resample(spec.max_vectors_per_polyline + 1).pts
        dx = pts[:, 0] - px
        dy = pts[:, 1] - py
        local = np.stack([dx * c + dy * s, -dx * s + dy * c], axis=1)
        for i in range(local.shape[0] - 1):
            sx, sy = local[i]
            ex, ey = local[i + 1]
            if sx == ex and sy == ey:
                continue
            if math.hypot(0.5 * (sx + ex), 0.5 * (sy + ey)) > spec.radius:
                continue
            features.append(
                VectorFeature(Point2(sx, sy), Point2(ex, ey), semantic, index)
            )
    return features
