"""Per-polygon geometric quantities: area, centroid, diameter and scaled moments.

Everything is computed for a batch of polygons with the same vertex count,
shape ``(m, N, 2)``; single-polygon helpers wrap a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import GeometryError

# 2-point Gauss-Legendre on [0, 1]; exact for the cubic edge integrands below.
_GAUSS_T = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_GAUSS_W = np.array([0.5, 0.5])

MAX_MOMENT_DEGREE = 2


@dataclass(frozen=True)
class CellGeometry:
    """Geometry of one polygon.

    ``moments[p, q]`` holds the integral over the cell of
    ``((x - xc) / h) ** p * ((y - yc) / h) ** q`` for ``p + q <= 2`` and is
    zero elsewhere, with ``(xc, yc)`` the area centroid and ``h`` the diameter.
    """

    vertices: np.ndarray
    area: float
    centroid: np.ndarray
    diameter: float
    moments: np.ndarray
    edge_lengths: np.ndarray
    # Outward unit normals, one per edge (edge i runs from vertex i to i+1).
    normals: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def perimeter(self) -> float:
        return float(self.edge_lengths.sum())


@dataclass(frozen=True)
class BatchGeometry:
    """Array-of-struct geometry for ``m`` polygons with ``N`` vertices each."""

    vertices: np.ndarray  # (m, N, 2)
    area: np.ndarray  # (m,)
    centroid: np.ndarray  # (m, 2)
    diameter: np.ndarray  # (m,)
    moments: np.ndarray  # (m, 3, 3)
    edge_lengths: np.ndarray  # (m, N)
    normals: np.ndarray  # (m, N, 2)

    def __len__(self):
        return len(self.area)

    def cell(self, i) -> CellGeometry:
        return CellGeometry(
            vertices=self.vertices[i],
            area=float(self.area[i]),
            centroid=self.centroid[i],
            diameter=float(self.diameter[i]),
            moments=self.moments[i],
            edge_lengths=self.edge_lengths[i],
            normals=self.normals[i],
        )


def _signed_area(v):
    x, y = v[..., 0], v[..., 1]
    xn, yn = np.roll(x, -1, axis=-1), np.roll(y, -1, axis=-1)
    return 0.5 * (x * yn - xn * y).sum(axis=-1)


def signed_area(coords) -> float:
    return float(_signed_area(np.asarray(coords, dtype=float)))


def _diameter(v):
    d = v[..., :, None, :] - v[..., None, :, :]
    return np.sqrt((d ** 2).sum(axis=-1).max(axis=(-2, -1)))


def polygon_diameter(coords) -> float:
    """Largest distance between two vertices."""
    return float(_diameter(np.asarray(coords, dtype=float)))


def _area_centroid(v, area):
    x, y = v[..., 0], v[..., 1]
    xn, yn = np.roll(x, -1, axis=-1), np.roll(y, -1, axis=-1)
    cross = x * yn - xn * y
    cx = ((x + xn) * cross).sum(axis=-1) / (6.0 * area)
    cy = ((y + yn) * cross).sum(axis=-1) / (6.0 * area)
    return np.stack([cx, cy], axis=-1)


def scaled_moments(v, centroid, h, degree=MAX_MOMENT_DEGREE):
    """Integrals of scaled monomials over polygons via Green's theorem.

    Uses  int_E x^p y^q dA = h / (p + 1) * oint x^(p+1) y^q n_x ds
    in scaled coordinates, integrated edge by edge with Gauss points.
    ``v`` is ``(m, N, 2)``; returns ``(m, degree+1, degree+1)``.
    """
    h = np.asarray(h, dtype=float)[:, None, None]
    s = (v - centroid[:, None, :]) / h
    sn = np.roll(s, -1, axis=1)
    # Gauss points on every edge, shape (m, N, 2 points, 2 coords)
    pts = s[:, :, None, :] + _GAUSS_T[None, None, :, None] * (sn - s)[:, :, None, :]
    # n_x ds is the physical dy
    dy = (sn[..., 1] - s[..., 1]) * h[:, :, 0]
    out = np.zeros((len(v), degree + 1, degree + 1))
    for p in range(degree + 1):
        for q in range(degree + 1 - p):
            f = pts[..., 0] ** (p + 1) * pts[..., 1] ** q
            edge = (f * _GAUSS_W).sum(axis=-1) * dy
            out[:, p, q] = h[:, 0, 0] / (p + 1) * edge.sum(axis=-1)
    return out


def batch_geometry(vertices) -> BatchGeometry:
    """Geometry for a stack of CCW polygons with equal vertex counts.

    Raises
    ------
    GeometryError
        On non-positive area or coincident consecutive vertices; the message
        names the offending batch position.
    """
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 3 or v.shape[2] != 2 or v.shape[1] < 3:
        raise GeometryError(f"polygons need at least 3 planar vertices, got shape {v.shape}")
    area = _signed_area(v)
    bad = np.flatnonzero(~(area > 0.0))
    if bad.size:
        raise GeometryError(
            f"degenerate or clockwise polygon at position {bad[0]} (signed area {area[bad[0]]:.3e})"
        )
    edges = np.roll(v, -1, axis=1) - v
    lengths = np.hypot(edges[..., 0], edges[..., 1])
    bad = np.flatnonzero(np.any(lengths <= 0.0, axis=1))
    if bad.size:
        raise GeometryError(f"polygon at position {bad[0]} has coincident consecutive vertices")
    normals = np.stack([edges[..., 1], -edges[..., 0]], axis=-1) / lengths[..., None]
    centroid = _area_centroid(v, area)
    h = _diameter(v)
    return BatchGeometry(
        vertices=v,
        area=area,
        centroid=centroid,
        diameter=h,
        moments=scaled_moments(v, centroid, h),
        edge_lengths=lengths,
        normals=normals,
    )


def polygon_geometry(coords) -> CellGeometry:
    """Area, area centroid, diameter and degree-2 scaled moments of a CCW polygon."""
    v = np.asarray(coords, dtype=float)
    if v.ndim != 2:
        raise GeometryError(f"expected an (N, 2) vertex array, got shape {v.shape}")
    return batch_geometry(v[None]).cell(0)
