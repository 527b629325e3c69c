"""Small-edge severity and star-shapedness of mesh cells."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .core import PolygonalMesh


@dataclass(frozen=True)
class MeshQualityReport:
    ratio: float
    h: float
    diameters: np.ndarray
    cell_ratios: np.ndarray
    star_shaped_ok: bool
    # radius of the largest ball w.r.t. which each cell is star-shaped, over h_E
    kernel_radii: np.ndarray

    def as_dict(self, mesh=None):
        out = {"ratio": float(self.ratio), "h": float(self.h), "star_shaped_ok": self.star_shaped_ok}
        if mesh is not None:
            out["n_cells"] = mesh.n_cells
            out["n_vertices"] = mesh.n_vertices
        return out


def _is_convex(v):
    e = np.roll(v, -1, axis=0) - v
    en = np.roll(e, -1, axis=0)
    cross = e[:, 0] * en[:, 1] - e[:, 1] * en[:, 0]
    scale = np.hypot(e[:, 0], e[:, 1]) * np.hypot(en[:, 0], en[:, 1])
    return bool(np.all(cross >= -1e-14 * scale))


def _inradius(v, normals):
    """Radius of the largest disc in the kernel (all inner edge half-planes)."""
    # maximize r subject to n_i . x + r <= n_i . v_i
    A = np.column_stack([normals, np.ones(len(normals))])
    b = (normals * v).sum(axis=1)
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=A, b_ub=b, bounds=[(None, None)] * 2 + [(0, None)])
    if res.status != 0:
        return 0.0
    return float(res.x[2])


def compute_quality(mesh: PolygonalMesh, kernel_check=True) -> MeshQualityReport:
    """Ratio = min over cells of shortest edge / diameter, plus star-shapedness.

    Convex cells are trivially star-shaped; only non-convex cells go through
    the kernel linear program.
    """
    n = mesh.n_cells
    diam = np.empty(n)
    cell_ratios = np.empty(n)
    radii = np.full(n, np.nan)
    ok = True
    for ids, _, geo in mesh.groups.values():
        diam[ids] = geo.diameter
        cell_ratios[ids] = geo.edge_lengths.min(axis=1) / geo.diameter
        if not kernel_check:
            continue
        for pos, k in enumerate(ids):
            v = geo.vertices[pos]
            if _is_convex(v):
                continue
            r = _inradius(v, geo.normals[pos])
            radii[k] = r / geo.diameter[pos]
            if not r > 0:
                ok = False
    return MeshQualityReport(
        ratio=float(cell_ratios.min()),
        h=float(diam.max()),
        diameters=diam,
        cell_ratios=cell_ratios,
        star_shaped_ok=ok,
        kernel_radii=radii,
    )
