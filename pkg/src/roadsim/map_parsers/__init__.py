"""Map ingestion: lanelet2 OSM, OpenDrive, and the canonical JSON dump."""

from .jsonmap import dump_map, load_map, map_from_dict, map_to_dict
from .opendrive import (
    DEFAULT_DS,
    PlanViewSegment,
    parse_opendrive,
    sample_plan_view,
)
from .osm import parse_osm_lanelet2
from .projection import ProjectionSpec, project_wgs84, unproject_wgs84

__all__ = [
    "DEFAULT_DS",
    "PlanViewSegment",
    "ProjectionSpec",
    "dump_map",
    "load_map",
    "map_from_dict",
    "map_to_dict",
    "parse_opendrive",
    "parse_osm_lanelet2",
    "project_wgs84",
    "sample_plan_view",
    "unproject_wgs84",
]
