"""Polygonal mesh container and structural validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..errors import GeometryError, MeshError, ParameterError
from .geometry import BatchGeometry, CellGeometry, batch_geometry, polygon_geometry, signed_area

TILING_RTOL = 1e-10


@dataclass(frozen=True)
class Domain:
    """Computational domain tag: ``rectangle`` (0,a)x(0,b) or ``lshape``."""

    kind: str
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind not in ("rectangle", "lshape"):
            raise ParameterError(f"unknown domain kind {self.kind!r}")
        if self.kind == "rectangle" and not (self.a > 0 and self.b > 0):
            raise ParameterError("rectangle sides must be positive")

    @classmethod
    def rectangle(cls, a=1.0, b=1.0):
        return cls("rectangle", float(a), float(b))

    @classmethod
    def lshape(cls):
        # (-1,1)^2 minus [0,1)x[0,1)
        return cls("lshape", 2.0, 2.0)

    @property
    def area(self) -> float:
        if self.kind == "rectangle":
            return self.a * self.b
        return 3.0

    @classmethod
    def parse(cls, text: str) -> "Domain":
        """Parse ``rect:a,b`` or ``lshape``."""
        text = text.strip().lower()
        if text in ("lshape", "l-shape", "l"):
            return cls.lshape()
        if text.startswith("rect"):
            _, _, args = text.partition(":")
            if not args:
                return cls.rectangle()
            parts = [float(p) for p in args.split(",")]
            if len(parts) != 2:
                raise ParameterError(f"rectangle needs two side lengths, got {args!r}")
            return cls.rectangle(*parts)
        raise ParameterError(f"cannot parse domain {text!r}")

    def __str__(self):
        if self.kind == "rectangle":
            return f"rect:{self.a:g},{self.b:g}"
        return "lshape"


def _freeze(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PolygonalMesh:
    """Vertices, CCW polygonal cells and per-vertex boundary flags.

    Construct through :meth:`from_cells` to get boundary flags computed from
    the edge topology. Instances are immutable.
    """

    points: np.ndarray
    cells: tuple
    boundary: np.ndarray
    domain: Domain | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "points", _freeze(np.asarray(self.points, dtype=float)))
        object.__setattr__(
            self, "cells", tuple(_freeze(np.asarray(c, dtype=np.int64)) for c in self.cells)
        )
        object.__setattr__(self, "boundary", _freeze(np.asarray(self.boundary, dtype=bool)))

    @classmethod
    def from_cells(cls, points, cells, domain=None, meta=None):
        points = np.asarray(points, dtype=float)
        cells = [np.asarray(c, dtype=np.int64) for c in cells]
        boundary = boundary_flags(len(points), cells)
        return cls(points, tuple(cells), boundary, domain, dict(meta or {}))

    @property
    def n_vertices(self) -> int:
        return len(self.points)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def cell_coords(self, i) -> np.ndarray:
        return self.points[self.cells[i]]

    @cached_property
    def groups(self) -> dict[int, tuple[np.ndarray, np.ndarray, BatchGeometry]]:
        """Cells grouped by vertex count: ``{N: (cell_ids, connectivity, geometry)}``."""
        sizes = np.array([len(c) for c in self.cells])
        out = {}
        for n in np.unique(sizes):
            ids = np.flatnonzero(sizes == n)
            conn = np.array([self.cells[i] for i in ids])
            try:
                geo = batch_geometry(self.points[conn])
            except GeometryError:
                for i in ids:
                    try:
                        polygon_geometry(self.points[self.cells[i]])
                    except GeometryError as exc:
                        raise GeometryError(f"cell {i}: {exc}") from None
                raise
            out[int(n)] = (ids, conn, geo)
        return out

    @cached_property
    def geometry(self) -> tuple[CellGeometry, ...]:
        cells = [None] * self.n_cells
        for ids, _, geo in self.groups.values():
            for pos, i in enumerate(ids):
                cells[i] = geo.cell(pos)
        return tuple(cells)

    @cached_property
    def diameters(self) -> np.ndarray:
        d = np.empty(self.n_cells)
        for ids, _, geo in self.groups.values():
            d[ids] = geo.diameter
        return d

    @property
    def h(self) -> float:
        """Mesh size: the largest cell diameter."""
        return float(self.diameters.max())

    def structurally_equal(self, other, atol=0.0) -> bool:
        if self.n_vertices != other.n_vertices or self.n_cells != other.n_cells:
            return False
        if not np.allclose(self.points, other.points, rtol=0.0, atol=atol):
            return False
        if any(not np.array_equal(a, b) for a, b in zip(self.cells, other.cells)):
            return False
        return bool(np.array_equal(self.boundary, other.boundary))


def directed_edges(cells):
    starts = np.concatenate([c for c in cells])
    ends = np.concatenate([np.roll(c, -1) for c in cells])
    return starts, ends


def boundary_flags(n_points, cells) -> np.ndarray:
    """Flag vertices lying on edges that belong to exactly one cell."""
    i, j = directed_edges(cells)
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    key = lo * n_points + hi
    uniq, counts = np.unique(key, return_counts=True)
    bkeys = uniq[counts == 1]
    flags = np.zeros(n_points, dtype=bool)
    flags[bkeys // n_points] = True
    flags[bkeys % n_points] = True
    return flags


def _segments_cross(p, q):
    """Pairwise proper-or-touching intersection test for the closed polygon's edges.

    Adjacent edges (sharing a vertex) are excluded.
    """
    n = len(p)
    a = p[:, None, :]
    b = q[:, None, :]
    c = p[None, :, :]
    d = q[None, :, :]

    def orient(u, v, w):
        return (v[..., 0] - u[..., 0]) * (w[..., 1] - u[..., 1]) - (v[..., 1] - u[..., 1]) * (
            w[..., 0] - u[..., 0]
        )

    o1 = orient(a, b, c)
    o2 = orient(a, b, d)
    o3 = orient(c, d, a)
    o4 = orient(c, d, b)
    hit = (o1 * o2 <= 0) & (o3 * o4 <= 0)
    idx = np.arange(n)
    adjacent = (
        (idx[:, None] == idx[None, :])
        | (idx[:, None] == (idx[None, :] + 1) % n)
        | ((idx[:, None] + 1) % n == idx[None, :])
    )
    # collinear non-overlapping segments give o1=o2=o3=o4=0; check bounding boxes
    colin = (o1 == 0) & (o2 == 0)
    if np.any(colin & ~adjacent):
        lo1 = np.minimum(a, b)
        hi1 = np.maximum(a, b)
        lo2 = np.minimum(c, d)
        hi2 = np.maximum(c, d)
        overlap = np.all((lo1 <= hi2) & (lo2 <= hi1), axis=-1)
        hit = np.where(colin, overlap, hit)
    return bool(np.any(hit & ~adjacent))


def is_simple_polygon(coords) -> bool:
    v = np.asarray(coords, dtype=float)
    if len(v) == 3:
        return signed_area(v) != 0.0
    return not _segments_cross(v, np.roll(v, -1, axis=0))


def validate(mesh: PolygonalMesh, check_simple=True) -> None:
    """Check the structural invariants of a mesh.

    Raises
    ------
    MeshError
        Describing the first violated invariant.
    """
    n = mesh.n_vertices
    if not np.all(np.isfinite(mesh.points)):
        raise MeshError("non-finite vertex coordinates")
    used = np.zeros(n, dtype=bool)
    for k, c in enumerate(mesh.cells):
        if len(c) < 3:
            raise MeshError(f"cell {k} has {len(c)} vertices")
        if c.min() < 0 or c.max() >= n:
            raise MeshError(f"cell {k} references a vertex out of range")
        if len(np.unique(c)) != len(c):
            raise MeshError(f"cell {k} repeats a vertex")
        coords = mesh.points[c]
        if np.any(np.all(coords == np.roll(coords, -1, axis=0), axis=1)):
            raise MeshError(f"cell {k} has coincident consecutive vertices")
        area = signed_area(coords)
        if not area > 0:
            raise MeshError(f"cell {k} is not counter-clockwise (signed area {area:.3e})")
        if check_simple and not is_simple_polygon(coords):
            raise MeshError(f"cell {k} is self-intersecting")
        used[c] = True
    if not used.all():
        raise MeshError(f"{int((~used).sum())} orphan vertices")

    i, j = directed_edges(mesh.cells)
    dkey = i * n + j
    if len(np.unique(dkey)) != len(dkey):
        raise MeshError("a directed edge is used twice (overlapping or mis-oriented cells)")
    ukey = np.minimum(i, j) * n + np.maximum(i, j)
    _, counts = np.unique(ukey, return_counts=True)
    if counts.max() > 2:
        raise MeshError("an edge is shared by more than two cells")
    if not np.array_equal(mesh.boundary, boundary_flags(n, mesh.cells)):
        raise MeshError("boundary flags disagree with edge topology")

    if mesh.domain is not None:
        total = sum(signed_area(mesh.points[c]) for c in mesh.cells)
        if abs(total - mesh.domain.area) > TILING_RTOL * mesh.domain.area:
            raise MeshError(
                f"cells cover area {total!r}, domain area is {mesh.domain.area!r}"
            )
