"""Numeric kernel dispatch.

Selects the compiled extension when it is importable, falling back to the
pure-Python reference implementation otherwise. Set ``ROADSIM_PURE_KERNELS=1``
to force the fallback (used by the backend-comparison benchmark). Both
backends are kept operation-for-operation identical, so results do not depend
on which one is active.
"""

import os

from . import pure

if os.environ.get("ROADSIM_PURE_KERNELS") == "1":
    _impl = pure
    BACKEND = "pure"
else:
    try:
        from . import _speedups as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = pure
        BACKEND = "pure"

TOUCH_EPS = pure.TOUCH_EPS

norm_angle = _impl.norm_angle
convex_overlap = _impl.convex_overlap
point_in_convex = _impl.point_in_convex
point_in_triangles = _impl.point_in_triangles
segment_point_distance = _impl.segment_point_distance
polygon_min_distance = _impl.polygon_min_distance
circle_polygon_overlap = _impl.circle_polygon_overlap
raycast_segments = _impl.raycast_segments
scan_rays = _impl.scan_rays
project_polyline = _impl.project_polyline
polyline_point_at = _impl.polyline_point_at
min_distance_polyline = _impl.min_distance_polyline
bicycle_step = _impl.bicycle_step
fill_convex_cells = _impl.fill_convex_cells
fill_capsule_cells = _impl.fill_capsule_cells

__all__ = [
    "BACKEND",
    "TOUCH_EPS",
    "norm_angle",
    "convex_overlap",
    "point_in_convex",
    "point_in_triangles",
    "segment_point_distance",
    "polygon_min_distance",
    "circle_polygon_overlap",
    "raycast_segments",
    "scan_rays",
    "project_polyline",
    "polyline_point_at",
    "min_distance_polyline",
    "bicycle_step",
    "fill_convex_cells",
    "fill_capsule_cells",
]
