"""Geodetic to local tangent-plane projection.

Maps span a few kilometers, so an equirectangular projection about a local
origin is accurate to well under a millimeter and exactly invertible, which
full map projections are not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..geometry import Point2

EARTH_RADIUS = 6_371_000.0


@dataclass(frozen=True)
class ProjectionSpec:
    origin_lat: float
    origin_lon: float
    earth_radius: float = EARTH_RADIUS

    def __post_init__(self):
        if not abs(self.origin_lat) < 90.0:
            raise ValueError("origin latitude must satisfy |lat| < 90")
        if not (math.isfinite(self.origin_lon) and self.earth_radius > 0):
            raise ValueError("projection parameters must be finite and positive")


def project_wgs84(lat: float, lon: float, spec: ProjectionSpec) -> Point2:
    """(lat, lon) degrees to local meters: x east, y north."""
    x = (
        spec.earth_radius
        * math.radians(lon - spec.origin_lon)
        * math.cos(math.radians(spec.origin_lat))
    )
    y = spec.earth_radius * math.radians(lat - spec.origin_lat)
    return Point2(x, y)


def unproject_wgs84(p: Point2, spec: ProjectionSpec) -> tuple[float, float]:
    """Inverse of project_wgs84; returns (lat, lon) degrees."""
    lon = spec.origin_lon + math.degrees(
        p.x / (spec.earth_radius * math.cos(math.radians(spec.origin_lat)))
    )
    lat = spec.origin_lat + math.degrees(p.y / spec.earth_radius)
    return lat, lon
