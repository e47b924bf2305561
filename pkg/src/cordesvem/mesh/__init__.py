from .core import (
    CellGeometry,
    MeshError,
    PolygonalMesh,
    ShapeRegularityReport,
    kernel_inradius,
    shape_regularity_report,
    shoelace_area,
)
from .generate import (
    MeshFamily,
    build_graded_mesh,
    build_uniform_square_mesh,
    build_voronoi_mesh,
)
from .io import MeshFormatError, mesh_from_json, mesh_to_json, read_mesh, write_mesh

__all__ = [
    "CellGeometry",
    "MeshError",
    "MeshFamily",
    "MeshFormatError",
    "PolygonalMesh",
    "ShapeRegularityReport",
    "build_graded_mesh",
    "build_uniform_square_mesh",
    "build_voronoi_mesh",
    "kernel_inradius",
    "mesh_from_json",
    "mesh_to_json",
    "read_mesh",
    "shape_regularity_report",
    "shoelace_area",
    "write_mesh",
]
