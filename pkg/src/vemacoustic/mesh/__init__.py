"""Polygonal meshes: geometry, generators, quality metrics and file I/O."""

from .core import Domain, PolygonalMesh, boundary_flags, is_simple_polygon, validate
from .generate import (
    FAMILIES,
    MeshFamilySpec,
    generate_base_mesh,
    generate_crossed_triangles,
    generate_family,
    generate_hexagon_mesh,
    insert_hanging_nodes,
)
from .geometry import CellGeometry, polygon_diameter, polygon_geometry, signed_area
from .io import OrientationWarning, format_mesh, parse_mesh, read_mesh, write_mesh
from .quality import MeshQualityReport, compute_quality

__all__ = [
    "CellGeometry",
    "Domain",
    "FAMILIES",
    "MeshFamilySpec",
    "MeshQualityReport",
    "OrientationWarning",
    "PolygonalMesh",
    "boundary_flags",
    "compute_quality",
    "format_mesh",
    "generate_base_mesh",
    "generate_crossed_triangles",
    "generate_family",
    "generate_hexagon_mesh",
    "insert_hanging_nodes",
    "is_simple_polygon",
    "parse_mesh",
    "polygon_diameter",
    "polygon_geometry",
    "read_mesh",
    "signed_area",
    "validate",
    "write_mesh",
]
