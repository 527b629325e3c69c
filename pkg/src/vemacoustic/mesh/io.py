"""Line-oriented ``vempoly 1`` mesh text format.

::

    vempoly 1
    points <n>
    x y                  (n lines)
    cells <m>
    k v1 ... vk          (m lines, 0-based vertex ids)
    boundary <n>
    f                    (n lines, 0 or 1)

Reals are written with 17 significant digits so a write/read cycle is exact.
"""

from __future__ import annotations

import logging
import warnings
from pathlib import Path

import numpy as np

from ..errors import MeshParseError
from .core import PolygonalMesh, boundary_flags
from .geometry import signed_area

log = logging.getLogger(__name__)

HEADER = "vempoly 1"


class OrientationWarning(UserWarning):
    """A clockwise cell was reversed while reading."""


def format_mesh(mesh: PolygonalMesh) -> str:
    lines = [HEADER, f"points {mesh.n_vertices}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.points]
    lines.append(f"cells {mesh.n_cells}")
    lines += [" ".join([str(len(c))] + [str(int(v)) for v in c]) for c in mesh.cells]
    lines.append(f"boundary {mesh.n_vertices}")
    lines += ["1" if f else "0" for f in mesh.boundary]
    return "\n".join(lines) + "\n"


def write_mesh(mesh: PolygonalMesh, path) -> None:
    Path(path).write_text(format_mesh(mesh))


def _section(lines, pos, name):
    if pos >= len(lines):
        raise MeshParseError(f"unexpected end of file, expected '{name} <count>'", pos + 1)
    parts = lines[pos].split()
    if len(parts) != 2 or parts[0] != name:
        raise MeshParseError(f"expected '{name} <count>', got {lines[pos]!r}", pos + 1)
    try:
        count = int(parts[1])
    except ValueError:
        raise MeshParseError(f"bad count {parts[1]!r}", pos + 1) from None
    if count < 0:
        raise MeshParseError("negative count", pos + 1)
    if pos + 1 + count > len(lines):
        raise MeshParseError(f"section '{name}' truncated", len(lines))
    return count


def parse_mesh(text: str, domain=None) -> PolygonalMesh:
    """Parse the text format; clockwise cells are reversed with a warning."""
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines or lines[0].strip() != HEADER:
        raise MeshParseError(f"missing header {HEADER!r}", 1)
    pos = 1
    n = _section(lines, pos, "points")
    points = np.empty((n, 2))
    for i in range(n):
        ln = pos + 2 + i
        parts = lines[ln - 1].split()
        try:
            if len(parts) != 2:
                raise ValueError
            points[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshParseError(f"expected 'x y', got {lines[ln - 1]!r}", ln) from None
        if not np.all(np.isfinite(points[i])):
            raise MeshParseError("non-finite coordinate", ln)
    pos += 1 + n
    m = _section(lines, pos, "cells")
    cells = []
    reoriented = []
    for i in range(m):
        ln = pos + 2 + i
        try:
            parts = [int(p) for p in lines[ln - 1].split()]
        except ValueError:
            raise MeshParseError(f"non-integer entry in {lines[ln - 1]!r}", ln) from None
        if not parts or parts[0] != len(parts) - 1:
            raise MeshParseError("vertex count does not match the number of ids", ln)
        if parts[0] < 3:
            raise MeshParseError(f"cell with {parts[0]} vertices", ln)
        ids = np.array(parts[1:], dtype=np.int64)
        if ids.min() < 0 or ids.max() >= n:
            raise MeshParseError(f"vertex index out of range [0, {n})", ln)
        if signed_area(points[ids]) < 0:
            ids = ids[::-1].copy()
            reoriented.append(i)
        cells.append(ids)
    pos += 1 + m
    nb = _section(lines, pos, "boundary")
    if nb != n:
        raise MeshParseError(f"boundary section has {nb} flags for {n} points", pos + 1)
    flags = np.empty(n, dtype=bool)
    for i in range(n):
        ln = pos + 2 + i
        tok = lines[ln - 1].strip()
        if tok not in ("0", "1"):
            raise MeshParseError(f"boundary flag must be 0 or 1, got {tok!r}", ln)
        flags[i] = tok == "1"
    if pos + 1 + nb != len(lines):
        raise MeshParseError("trailing content after boundary section", pos + 2 + nb)
    if reoriented:
        msg = f"reoriented {len(reoriented)} clockwise cell(s) to CCW: {reoriented[:10]}"
        warnings.warn(msg, OrientationWarning, stacklevel=3)
        log.warning(msg)
    if not np.array_equal(flags, boundary_flags(n, cells)):
        log.warning("boundary flags in file disagree with edge topology")
    meta = {"reoriented_cells": reoriented}
    return PolygonalMesh(points, tuple(cells), flags, domain, meta)


def read_mesh(path, domain=None) -> PolygonalMesh:
    return parse_mesh(Path(path).read_text(), domain=domain)
