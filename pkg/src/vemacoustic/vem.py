"""Lowest-order virtual element operators for the shifted acoustic problem.

Local objects are expressed in the scaled monomial basis
``{1, (x - xc)/h, (y - yc)/h}`` with ``(xc, yc)`` the cell's area centroid
and ``h`` its diameter. All boundary integrals are evaluated exactly edge by
edge (virtual functions have linear traces).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ElementError, ParameterError
from .mesh import PolygonalMesh
from .mesh.geometry import BatchGeometry, CellGeometry, batch_geometry

TANGENTIAL = "tangential"
NODAL = "nodal"
HALF_TRACE = "half-trace"
CONSTANT = "constant"
# consistency-only stiffness is rank deficient on polygons; refuse vanishing sigma
MIN_SIGMA = 1e-8


@dataclass(frozen=True)
class MaterialParams:
    rho: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if not (self.rho > 0 and np.isfinite(self.rho)):
            raise ParameterError(f"density must be positive, got {self.rho}")
        if not (self.c > 0 and np.isfinite(self.c)):
            raise ParameterError(f"sound speed must be positive, got {self.c}")

    @property
    def stiffness_factor(self) -> float:
        return self.c ** 2 / self.rho

    @property
    def mass_factor(self) -> float:
        return 1.0 / self.rho


WATER = MaterialParams(rho=1000.0, c=1430.0)
AIR = MaterialParams(rho=1.0, c=340.0)


@dataclass(frozen=True)
class StabilizationKind:
    """Which stiffness stabilization to use and how to pick its weight.

    ``kind`` is ``"tangential"`` (``sigma h_E int_{dE} d_s u d_s v``) or
    ``"nodal"`` (``sigma sum_i u(V_i) v(V_i)``). ``sigma_rule`` is
    ``"constant"`` (use ``sigma``) or ``"half-trace"`` (half the trace of the
    local consistency stiffness).
    """

    kind: str = TANGENTIAL
    sigma_rule: str = CONSTANT
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in (TANGENTIAL, NODAL):
            raise ParameterError(f"unknown stabilization {self.kind!r}")
        if self.sigma_rule not in (CONSTANT, HALF_TRACE):
            raise ParameterError(f"unknown sigma rule {self.sigma_rule!r}")
        if self.sigma_rule == CONSTANT and not self.sigma >= MIN_SIGMA:
            raise ParameterError(
                f"sigma = {self.sigma!r} is below {MIN_SIGMA:g}; stabilization is required for rank"
            )


@dataclass(frozen=True)
class LocalElementMatrices:
    """Local operators of one cell.

    ``Pi[j]`` holds the monomial coefficients of the projection of the j-th
    vertex basis function.
    """

    Pi: np.ndarray
    K_cons: np.ndarray
    K_stab: np.ndarray
    M_cons: np.ndarray
    M_stab: np.ndarray
    sigma: float

    @property
    def stiffness(self):
        return self.K_cons + self.K_stab

    @property
    def mass(self):
        return self.M_cons + self.M_stab


@dataclass(frozen=True)
class _BatchLocal:
    Pi_star: np.ndarray  # (m, 3, N)
    K_cons: np.ndarray  # (m, N, N)
    K_stab: np.ndarray
    M_cons: np.ndarray
    M_stab: np.ndarray
    sigma: np.ndarray  # (m,)
    # tangential only: K_stab = K_rest + sum_e w_e d_e d_e^T with d_e the
    # +-1 difference across edge e and w_e = sigma h_E / |e|
    K_rest: np.ndarray | None = None
    edge_weights: np.ndarray | None = None  # (m, N)


def _sym(x):
    return 0.5 * (x + np.swapaxes(x, -1, -2))


def _as_batch(geom) -> BatchGeometry:
    if isinstance(geom, BatchGeometry):
        return geom
    if isinstance(geom, CellGeometry):
        return batch_geometry(geom.vertices[None])
    return batch_geometry(np.asarray(geom, dtype=float)[None])


def _projector_parts(g: BatchGeometry, cell_ids=None):
    """Return (Pi_star, D, G) for a batch; Pi_star = G^{-1} B is (m, 3, N)."""
    m, n = g.edge_lengths.shape
    h = g.diameter
    lengths = g.edge_lengths
    prev = np.roll(lengths, 1, axis=1)
    nprev = np.roll(g.normals, 1, axis=1)
    perimeter = lengths.sum(axis=1)

    B = np.empty((m, 3, n))
    B[:, 0, :] = (prev + lengths) / (2.0 * perimeter[:, None])
    # int_{dE} phi_j grad(m_i).n, grad m_i = e_i / h, trapezoid on the two edges at V_j
    flux = 0.5 * (prev[..., None] * nprev + lengths[..., None] * g.normals)
    B[:, 1, :] = flux[..., 0] / h[:, None]
    B[:, 2, :] = flux[..., 1] / h[:, None]

    D = np.empty((m, n, 3))
    D[..., 0] = 1.0
    D[..., 1:] = (g.vertices - g.centroid[:, None, :]) / h[:, None, None]

    G = B @ D
    det = np.linalg.det(G)
    # G = [[1, *, *], [0, |E|/h^2, 0], [0, 0, |E|/h^2]] for exact arithmetic
    expected = (g.area / h ** 2) ** 2
    bad = np.flatnonzero(~(np.abs(det) > 1e-14 * expected))
    if bad.size:
        cell = None if cell_ids is None else int(cell_ids[bad[0]])
        raise ElementError("singular projector system (degenerate geometry)", cell)
    Pi_star = np.linalg.solve(G, B)
    return Pi_star, D, G


def projector_pi_nabla(geom) -> np.ndarray:
    """Energy projector onto P1 for one cell, as an ``(N_E, 3)`` coefficient matrix.

    Row ``j`` gives the coefficients of the projection of the j-th vertex
    hat function in the scaled monomial basis. ``geom`` may be a
    :class:`CellGeometry` or an ``(N, 2)`` vertex array.
    """
    Pi_star, _, _ = _projector_parts(_as_batch(geom))
    return Pi_star[0].T


def _local_batch(g: BatchGeometry, params: MaterialParams, stab: StabilizationKind, cell_ids=None):
    m, n = g.edge_lengths.shape
    Pi_star, D, G = _projector_parts(g, cell_ids)
    Gt = G.copy()
    Gt[:, 0, :] = 0.0
    PiT = np.swapaxes(Pi_star, 1, 2)
    K_cons = params.stiffness_factor * _sym(PiT @ Gt @ Pi_star)

    mo = g.moments
    H = np.empty((m, 3, 3))
    H[:, 0, 0] = mo[:, 0, 0]
    H[:, 0, 1] = H[:, 1, 0] = mo[:, 1, 0]
    H[:, 0, 2] = H[:, 2, 0] = mo[:, 0, 1]
    H[:, 1, 1] = mo[:, 2, 0]
    H[:, 1, 2] = H[:, 2, 1] = mo[:, 1, 1]
    H[:, 2, 2] = mo[:, 0, 2]
    M_cons = params.mass_factor * _sym(PiT @ H @ Pi_star)

    # dof fluctuation (I - Pi) in vertex values
    R = np.eye(n)[None] - D @ Pi_star
    RtR = np.swapaxes(R, 1, 2) @ R

    if stab.sigma_rule == HALF_TRACE:
        sigma = 0.5 * np.trace(K_cons, axis1=1, axis2=2)
    else:
        sigma = np.full(m, float(stab.sigma))

    K_rest = edge_weights = None
    if stab.kind == TANGENTIAL:
        # h_E sum_e (r_{e+1} - r_e)^2 / |e| on the fluctuation r = (I - Pi) q.
        # The edge differences of r are d_e - c_e with d_e the exact +-1 vertex
        # difference and c_e = (edge / h) . Pi_grad; only the d_e d_e^T part
        # carries the large h / |e| weight of a short edge.
        Dd = np.roll(np.eye(n), -1, axis=0) - np.eye(n)  # row e: e_{e+1} - e_e
        dD = (np.roll(g.vertices, -1, axis=1) - g.vertices) / g.diameter[:, None, None]
        C = dD @ Pi_star[:, 1:, :]
        W = g.diameter[:, None] / g.edge_lengths
        WC = W[..., None] * C
        DdT = Dd.T[None]
        cross = DdT @ WC
        rest = np.swapaxes(C, 1, 2) @ WC - cross - np.swapaxes(cross, 1, 2)
        lap = np.einsum("ei,me,ej->mij", Dd, W, Dd)
        core = lap + rest
        K_rest = sigma[:, None, None] * _sym(rest)
        edge_weights = sigma[:, None] * W
    else:
        core = RtR
    K_stab = sigma[:, None, None] * _sym(core)
    M_stab = (params.mass_factor * g.area / n)[:, None, None] * _sym(RtR)
    return _BatchLocal(Pi_star, K_cons, K_stab, M_cons, M_stab, sigma, K_rest, edge_weights)


def local_matrices(geom, params: MaterialParams = MaterialParams(), stab: StabilizationKind = StabilizationKind()) -> LocalElementMatrices:
    """Projector, consistency, stabilization and mass blocks for one cell."""
    b = _local_batch(_as_batch(geom), params, stab)
    return LocalElementMatrices(
        Pi=b.Pi_star[0].T,
        K_cons=b.K_cons[0],
        K_stab=b.K_stab[0],
        M_cons=b.M_cons[0],
        M_stab=b.M_stab[0],
        sigma=float(b.sigma[0]),
    )


@dataclass(frozen=True)
class GlobalSystem:
    """Assembled global forms over vertex dofs (dof i is mesh vertex i).

    ``A`` is the stiffness form, ``B`` the mass form and ``Ahat = A + B`` the
    shifted, coercive left-hand side.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    Ahat: sp.csr_matrix
    K_cons: sp.csr_matrix
    K_stab: sp.csr_matrix
    params: MaterialParams
    stab: StabilizationKind
    # Congruent pencil used by the eigensolver: q = T y, Ahat_y = T^T Ahat T,
    # B_y = T^T B T, assembled so that short-edge penalties sit on separate
    # difference dofs (see ``short_edge_transform``).
    T: sp.csr_matrix | None = None
    Ahat_y: sp.csr_matrix | None = None
    B_y: sp.csr_matrix | None = None

    @property
    def n(self) -> int:
        return self.A.shape[0]


def _scatter(blocks, conns, n):
    rows, cols, vals = [], [], []
    for X, conn in zip(blocks, conns):
        k = conn.shape[1]
        rows.append(np.repeat(conn, k, axis=1).ravel())
        cols.append(np.tile(conn, (1, k)).ravel())
        vals.append(X.reshape(len(conn), -1).ravel())
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


SHORT_EDGE = 1e-2


def short_edge_transform(n, edges_i, edges_j, rel_length, threshold=SHORT_EDGE):
    """Change of dofs ``q = T y`` pairing the endpoints of short edges.

    Edges with ``|e| / h_E < threshold`` are visited shortest first; an
    endpoint not yet used becomes a *child* of the other endpoint (which
    becomes or already is a *parent*), and its new dof is the difference
    ``y_child = q_child - q_parent``. Parents are never children, so
    ``T = I + sum e_child e_parent^T`` has exact unit entries.
    """
    short = np.flatnonzero(rel_length < threshold)
    order = short[np.argsort(rel_length[short], kind="stable")]
    role = np.zeros(n, dtype=np.int8)  # 0 free, 1 parent, 2 child
    parent = -np.ones(n, dtype=np.int64)
    for e in order:
        a, b = int(edges_i[e]), int(edges_j[e])
        if role[a] == 2 or role[b] == 2 or (role[a] == 1 and role[b] == 1):
            continue
        if role[b] == 1 or (role[a] == 0 and role[b] == 0 and a > b):
            a, b = b, a
        # a is the parent, b the child
        role[a] = 1
        role[b] = 2
        parent[b] = a
    children = np.flatnonzero(parent >= 0)
    rows = np.concatenate([np.arange(n), children])
    cols = np.concatenate([np.arange(n), parent[children]])
    T = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return T, parent


def assemble(mesh: PolygonalMesh, params: MaterialParams = MaterialParams(), stab: StabilizationKind = StabilizationKind()) -> GlobalSystem:
    """Scatter-add local blocks into global sparse matrices.

    No dofs are eliminated: the problem is pure Neumann. Cells are processed
    in groups of equal vertex count, always in the same order, so repeated
    assemblies are bitwise identical. Alongside the vertex-dof matrices the
    congruent short-edge pencil ``(Ahat_y, B_y)`` is built for the solver.
    """
    kc, ks, kr, mc, ms, conns = [], [], [], [], [], []
    ei, ej, ew, erel = [], [], [], []
    for _, (ids, conn, geo) in sorted(mesh.groups.items()):
        b = _local_batch(geo, params, stab, ids)
        kc.append(b.K_cons)
        ks.append(b.K_stab)
        mc.append(b.M_cons)
        ms.append(b.M_stab)
        conns.append(conn)
        if b.K_rest is not None:
            kr.append(b.K_rest)
            ei.append(conn.ravel())
            ej.append(np.roll(conn, -1, axis=1).ravel())
            ew.append(b.edge_weights.ravel())
            erel.append((geo.edge_lengths / geo.diameter[:, None]).ravel())
    n = mesh.n_vertices
    K_cons = _scatter(kc, conns, n)
    K_stab = _scatter(ks, conns, n)
    A = (K_cons + K_stab).tocsr()
    B = (_scatter(mc, conns, n) + _scatter(ms, conns, n)).tocsr()
    Ahat = (A + B).tocsr()

    if kr:
        ei, ej = np.concatenate(ei), np.concatenate(ej)
        ew, erel = np.concatenate(ew), np.concatenate(erel)
        T, _ = short_edge_transform(n, ei, ej, erel)
        m_e = len(ei)
        inc = sp.csr_matrix(
            (np.concatenate([-np.ones(m_e), np.ones(m_e)]),
             (np.concatenate([np.arange(m_e)] * 2), np.concatenate([ei, ej]))),
            shape=(m_e, n),
        )
        DT = (inc @ T).tocsr()
        smooth = K_cons + _scatter(kr, conns, n) + B
        Ahat_y = (T.T @ smooth @ T + DT.T @ sp.diags(ew) @ DT).tocsr()
    else:
        T = sp.identity(n, format="csr")
        Ahat_y = Ahat.copy()
    B_y = (T.T @ B @ T).tocsr()
    for mat in (A, B, Ahat, Ahat_y, B_y):
        mat.sum_duplicates()
        mat.sort_indices()
    return GlobalSystem(
        A=A, B=B, Ahat=Ahat, K_cons=K_cons, K_stab=K_stab, params=params, stab=stab,
        T=T, Ahat_y=Ahat_y, B_y=B_y,
    )


def cell_projections(mesh: PolygonalMesh, values) -> tuple[np.ndarray, np.ndarray]:
    """Project vertex values cellwise onto P1.

    Returns ``(coeffs, grads)``: ``coeffs[k]`` are scaled-monomial
    coefficients on cell ``k`` and ``grads[k]`` the constant gradient of the
    projection. ``values`` may carry a trailing axis of several fields.
    """
    values = np.asarray(values, dtype=float)
    extra = values.shape[1:]
    coeffs = np.empty((mesh.n_cells, 3) + extra)
    grads = np.empty((mesh.n_cells, 2) + extra)
    for _, (ids, conn, geo) in sorted(mesh.groups.items()):
        Pi_star, _, _ = _projector_parts(geo, ids)
        c = np.einsum("mij,mj...->mi...", Pi_star, values[conn])
        coeffs[ids] = c
        shape = (-1, 1) + (1,) * len(extra)
        grads[ids] = c[:, 1:] / geo.diameter.reshape(shape)
    return coeffs, grads


def export_matrix(mat, path) -> None:
    """Write the upper triangle as ``row col value`` lines, 0-based."""
    up = sp.triu(sp.csr_matrix(mat)).tocoo()
    order = np.lexsort((up.col, up.row))
    with Path(path).open("w") as fh:
        for r, c, v in zip(up.row[order], up.col[order], up.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")
