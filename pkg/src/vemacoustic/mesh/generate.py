"""Structured base meshes and the small-edge mesh families T1..T5."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from .core import Domain, PolygonalMesh, validate

DEFAULT_RECTANGLE = Domain.rectangle(1.0, 1.1)
FAMILIES = ("T1", "T2", "T3", "T4", "T5")
DEFAULT_M0 = 4.0
CLAMP_FRACTION = 1e-12


def _round_half_up(x) -> int:
    return int(math.floor(x + 0.5))


def _compact(points, cells):
    """Drop unused points and renumber cells accordingly."""
    points = np.asarray(points, dtype=float)
    used = np.zeros(len(points), dtype=bool)
    for c in cells:
        used[c] = True
    new_id = -np.ones(len(points), dtype=np.int64)
    new_id[used] = np.arange(int(used.sum()))
    return points[used], [new_id[np.asarray(c)] for c in cells]


def _quad_grid(x0, y0, dx, dy, nx, ny, keep=None):
    xs = x0 + dx * np.arange(nx + 1)
    ys = y0 + dy * np.arange(ny + 1)
    X, Y = np.meshgrid(xs, ys)
    points = np.column_stack([X.ravel(), Y.ravel()])
    cells = []
    for j in range(ny):
        for i in range(nx):
            if keep is not None and not keep(xs[i], ys[j]):
                continue
            v = j * (nx + 1) + i
            cells.append(np.array([v, v + 1, v + nx + 2, v + nx + 1]))
    return points, cells


def rectangle_rows(domain: Domain, N: int) -> int:
    return max(1, _round_half_up(N * domain.b / domain.a))


def generate_base_mesh(domain: Domain, N: int) -> PolygonalMesh:
    """Structured quadrilateral mesh with ``N`` cells along the bottom.

    Rectangle (0,a)x(0,b): ``N x round(N b / a)`` cells. L-shape: ``N``
    cells per unit length on (-1,1)^2 with the quadrant [0,1)^2 removed.
    """
    N = int(N)
    if N < 2:
        raise ParameterError(f"refinement N must be >= 2, got {N}")
    if domain.kind == "rectangle":
        ny = rectangle_rows(domain, N)
        points, cells = _quad_grid(0.0, 0.0, domain.a / N, domain.b / ny, N, ny)
    else:
        h = 1.0 / N
        # cells are identified by their lower-left corner
        points, cells = _quad_grid(
            -1.0, -1.0, h, h, 2 * N, 2 * N, keep=lambda x, y: not (x >= -0.5 * h and y >= -0.5 * h)
        )
        points, cells = _compact(points, cells)
        # snap the grid coordinates so that x = 0 lines are exact
        points = np.round(points * N) / N
    return PolygonalMesh.from_cells(points, cells, domain, meta={"N": N, "base": "quad"})


def _edge_table(mesh):
    """Undirected edges (lo, hi) with the max diameter of the incident cells."""
    diam = {}
    for c, g in zip(mesh.cells, mesh.geometry):
        for a, b in zip(c, np.roll(c, -1)):
            key = (int(min(a, b)), int(max(a, b)))
            diam[key] = max(diam.get(key, 0.0), g.diameter)
    return diam


def insert_hanging_nodes(mesh: PolygonalMesh, M: float) -> PolygonalMesh:
    """Put one hanging node on every edge, collapsing toward its lower-indexed vertex.

    The node sits at ``(1 - t) x1 + t x2`` with ``t = |x2 - x1| / M`` so its
    distance to ``x1`` is ``|x2 - x1|**2 / M``. Offsets below
    ``1e-12 * h_E`` are clamped to keep the new edges strictly positive.

    Raises
    ------
    ParameterError
        If some edge gives ``t`` outside (0, 1).
    """
    M = float(M)
    if not M > 0 or math.isnan(M):
        raise ParameterError(f"collapse parameter M must be positive, got {M}")
    edges = _edge_table(mesh)
    pts = mesh.points
    new_points = [pts]
    node_of = {}
    n = mesh.n_vertices
    extra = []
    clamped = 0
    for (lo, hi), h_e in edges.items():
        x1, x2 = pts[lo], pts[hi]
        length = float(np.hypot(*(x2 - x1)))
        t = length / M
        if not 0.0 < t < 1.0:
            raise ParameterError(
                f"t = dist/M = {t:.3e} outside (0, 1) for an edge of length {length:.3e}"
            )
        t_min = CLAMP_FRACTION * h_e / length
        if t < t_min:
            t = t_min
            clamped += 1
        else:
            # the collapsed node sits at distance dist^2 / M from x1
            assert abs(t * length - length * length / M) <= 1e-12 * length
        extra.append((1.0 - t) * x1 + t * x2)
        node_of[(lo, hi)] = n + len(extra) - 1
    if extra:
        new_points.append(np.array(extra))
    cells = []
    for c in mesh.cells:
        out = []
        for a, b in zip(c, np.roll(c, -1)):
            out.append(int(a))
            out.append(node_of[(int(min(a, b)), int(max(a, b)))])
        cells.append(np.array(out))
    meta = dict(mesh.meta)
    meta.update({"M": M, "clamped_nodes": clamped})
    return PolygonalMesh.from_cells(np.vstack(new_points), cells, mesh.domain, meta)


def generate_crossed_triangles(domain: Domain, N: int) -> PolygonalMesh:
    """Each cell of the structured quad grid split into four triangles by its diagonals."""
    base = generate_base_mesh(domain, N)
    pts = [base.points]
    cells = []
    nv = base.n_vertices
    for k, c in enumerate(base.cells):
        centre = base.points[c].mean(axis=0)
        pts.append(centre[None, :])
        m = nv + k
        for a, b in zip(c, np.roll(c, -1)):
            cells.append(np.array([a, b, m]))
    meta = dict(base.meta, base="crossed-triangles")
    return PolygonalMesh.from_cells(np.vstack(pts), cells, domain, meta)


def generate_hexagon_mesh(domain: Domain, N: int, delta=None, zigzag=1.0 / 6.0) -> PolygonalMesh:
    """Brick-pattern hexagon-dominant mesh with one shortened edge per hexagon.

    Interior horizontal lines zig-zag by ``zigzag * dy`` which makes full
    bricks convex hexagons; alternate rows end in quadrilateral half bricks.
    The top-middle vertex of every hexagon is then slid along its edge
    toward the top-left corner until that edge has length ``delta``
    (default ``(a / N)**2 / N``). No hanging nodes are created.
    """
    if domain.kind != "rectangle":
        raise ParameterError("hexagon meshes are only generated on rectangles")
    N = int(N)
    if N < 2:
        raise ParameterError(f"refinement N must be >= 2, got {N}")
    rows = rectangle_rows(domain, N)
    dx = domain.a / (2 * N)
    dy = domain.b / rows
    if delta is None:
        delta = (domain.a / N) ** 2 / N
    eps = zigzag * dy
    nk = 2 * N + 1

    def pid(j, k):
        return j * nk + k

    points = np.zeros(((rows + 1) * nk, 2))
    for j in range(rows + 1):
        for k in range(nk):
            off = 0.0
            if 0 < j < rows:
                off = eps if (k - j) % 2 == 0 else -eps
            points[pid(j, k)] = (k * dx, j * dy + off)
    # exact boundary coordinates
    points[:, 0] = np.where(np.arange(len(points)) % nk == nk - 1, domain.a, points[:, 0])
    points[-nk:, 1] = domain.b

    cells = []
    hex_top_mid = []
    for r in range(rows):
        spans = []
        if r % 2 == 0:
            spans = [(2 * i, 2 * i + 2) for i in range(N)]
        else:
            spans = [(0, 1)] + [(k0, k0 + 2) for k0 in range(1, 2 * N - 2, 2)] + [(2 * N - 1, 2 * N)]
        for k0, k1 in spans:
            bottom = [pid(r, k) for k in range(k0, k1 + 1)]
            top = [pid(r + 1, k) for k in range(k1, k0 - 1, -1)]
            cells.append(np.array(bottom + top))
            if k1 - k0 == 2:
                hex_top_mid.append((pid(r + 1, k0 + 1), pid(r + 1, k0)))
    if delta > 0:
        for mid, left in hex_top_mid:
            d = points[mid] - points[left]
            length = float(np.hypot(*d))
            if not delta < length:
                raise ParameterError(f"short-edge length {delta:.3e} exceeds edge {length:.3e}")
            points[mid] = points[left] + delta * d / length
    meta = {"N": N, "base": "hexagon", "delta": float(delta)}
    return PolygonalMesh.from_cells(points, cells, domain, meta)


@dataclass(frozen=True)
class MeshFamilySpec:
    """One member of a mesh family.

    ``M0`` scales the collapse schedule: ``M = M0 * N`` for T1/T4 and
    ``M = M0 * N**3`` for T3/T5. Unused by T2.
    """

    family: str
    N: int
    M0: float = DEFAULT_M0
    domain: Domain | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown mesh family {self.family!r}")
        if int(self.N) != self.N or self.N < 2:
            raise ParameterError(f"refinement N must be an integer >= 2, got {self.N}")
        if not self.M0 > 0:
            raise ParameterError(f"M0 must be positive, got {self.M0}")
        if self.domain is not None:
            if self.family in ("T4", "T5") and self.domain.kind != "lshape":
                raise ParameterError(f"{self.family} is an L-shape family")
            if self.family in ("T1", "T2", "T3") and self.domain.kind != "rectangle":
                raise ParameterError(f"{self.family} is a rectangle family")

    @property
    def resolved_domain(self) -> Domain:
        if self.domain is not None:
            return self.domain
        return Domain.lshape() if self.family in ("T4", "T5") else DEFAULT_RECTANGLE

    @property
    def M(self) -> float | None:
        if self.family in ("T1", "T4"):
            return self.M0 * self.N
        if self.family in ("T3", "T5"):
            return self.M0 * self.N ** 3
        return None


def generate_family(spec: MeshFamilySpec, check=True) -> PolygonalMesh:
    domain = spec.resolved_domain
    if spec.family == "T2":
        mesh = generate_hexagon_mesh(domain, spec.N)
    else:
        base = generate_base_mesh(domain, spec.N)
        longest = max(float(g.edge_lengths.max()) for g in base.geometry)
        if not spec.M > longest:
            raise ParameterError(f"M = {spec.M:g} must exceed the longest edge {longest:g}")
        mesh = insert_hanging_nodes(base, spec.M)
    meta = dict(mesh.meta, family=spec.family)
    mesh = PolygonalMesh(mesh.points, mesh.cells, mesh.boundary, mesh.domain, meta)
    if check:
        validate(mesh, check_simple=False)
    return mesh
