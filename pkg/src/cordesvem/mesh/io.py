"""JSON (de)serialisation of polygonal meshes.

Schema::

    {"vertices": [[x, y], ...], "cells": [[i0, i1, ...], ...], "boundary_vertices": [i, ...]}

Coordinates are written with 17 significant digits so a write/read cycle is
lossless.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import MeshError, PolygonalMesh


class MeshFormatError(MeshError):
    """Malformed mesh file."""


def mesh_to_json(mesh: PolygonalMesh) -> str:
    lines = ["{", '  "vertices": [']
    vs = [f"    [{x:.17g}, {y:.17g}]" for x, y in mesh.vertices]
    lines.append(",\n".join(vs))
    lines.append("  ],")
    lines.append('  "cells": [')
    lines.append(",\n".join("    [" + ", ".join(str(int(i)) for i in c) + "]" for c in mesh.cells))
    lines.append("  ],")
    lines.append('  "boundary_vertices": [' + ", ".join(str(int(i)) for i in mesh.boundary_vertices) + "]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_mesh(mesh: PolygonalMesh, path) -> None:
    Path(path).write_text(mesh_to_json(mesh))


def mesh_from_json(text: str, source: str = "<string>") -> PolygonalMesh:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MeshFormatError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise MeshFormatError(f"{source}: top level must be an object")
    for key in ("vertices", "cells"):
        if key not in data:
            raise MeshFormatError(f"{source}: missing field {key!r}")

    verts = data["vertices"]
    for i, v in enumerate(verts):
        if (not isinstance(v, list) or len(v) != 2
                or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v)):
            raise MeshFormatError(f"{source}: vertices[{i}] must be a pair of numbers, got {v!r}")
    cells = data["cells"]
    for k, c in enumerate(cells):
        if not isinstance(c, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in c):
            raise MeshFormatError(f"{source}: cells[{k}] must be a list of integers, got {c!r}")

    try:
        mesh = PolygonalMesh(np.array(verts, dtype=float).reshape(-1, 2), cells)
    except MeshError as exc:
        raise MeshFormatError(f"{source}: {exc}") from exc

    if "boundary_vertices" in data:
        declared = sorted(int(i) for i in data["boundary_vertices"])
        if declared != mesh.boundary_vertices.tolist():
            raise MeshFormatError(f"{source}: field 'boundary_vertices' disagrees with the cell topology")
    return mesh


def read_mesh(path) -> PolygonalMesh:
    path = Path(path)
    return mesh_from_json(path.read_text(), source=str(path))
