import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from conftest import insert_on_edge, star_polygon, unit_square_mesh
from vemacoustic.errors import ElementError, ParameterError
from vemacoustic.mesh import Domain, MeshFamilySpec, PolygonalMesh, generate_base_mesh, generate_family, polygon_geometry
from vemacoustic.vem import (
    AIR,
    WATER,
    MaterialParams,
    StabilizationKind,
    assemble,
    cell_projections,
    export_matrix,
    local_matrices,
    projector_pi_nabla,
    short_edge_transform,
)

TRI = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
SQUARE = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
STABS = [StabilizationKind("tangential"), StabilizationKind("nodal")]


def p1_values(coords, g, coef):
    x = (coords - g.centroid) / g.diameter
    return coef[0] + coef[1] * x[:, 0] + coef[2] * x[:, 1]


@pytest.mark.parametrize("stab", STABS)
def test_triangle_reduces_to_p1(stab):
    loc = local_matrices(polygon_geometry(TRI), MaterialParams(), stab)
    K = np.array([[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])
    M = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24
    assert np.allclose(loc.K_cons, K, atol=1e-14)
    assert np.abs(loc.K_stab).max() <= 1e-13
    assert np.allclose(loc.M_cons, M, atol=1e-15)
    assert np.abs(loc.M_stab).max() <= 1e-13


def test_triangle_projector_is_nodal_basis():
    g = polygon_geometry(TRI)
    Pi = projector_pi_nabla(g)
    # phi_1 = 1 - x - y in scaled monomials about the centroid
    xc, yc, h = g.centroid[0], g.centroid[1], g.diameter
    expect = [1 - xc - yc, -h, -h]
    assert np.allclose(Pi[0], expect, atol=1e-14)


def test_square_constants_in_kernel():
    loc = local_matrices(polygon_geometry(SQUARE))
    one = np.ones(4)
    assert np.abs(loc.K_cons @ one).max() <= 1e-14
    assert np.abs(loc.K_stab @ one).max() <= 1e-14


def test_square_hourglass_tangential_value():
    loc = local_matrices(polygon_geometry(SQUARE), MaterialParams(), StabilizationKind("tangential", sigma=1.0))
    v = np.array([1.0, -1.0, 1.0, -1.0])
    # v is pure fluctuation (Pi v = 0), so S(v, v) = h * sum (dv)^2 / |e|
    assert np.allclose(loc.Pi.T @ v, 0, atol=1e-15)
    assert v @ loc.K_stab @ v == pytest.approx(16 * np.sqrt(2), rel=1e-14)


def test_square_projector_linear_coordinate():
    g = polygon_geometry(SQUARE)
    vals = (SQUARE[:, 0] - g.centroid[0]) / g.diameter
    assert np.allclose(projector_pi_nabla(g).T @ vals, [0, 1, 0], atol=1e-15)


@pytest.mark.parametrize("stab", STABS + [StabilizationKind("tangential", "half-trace")])
def test_local_invariants_on_hexagon_with_hanging_node(stab):
    v = insert_on_edge(star_polygon(np.random.default_rng(3), 6), 2, 1e-7)
    loc = local_matrices(polygon_geometry(v), WATER, stab)
    for X in (loc.K_cons, loc.K_stab, loc.M_cons, loc.M_stab):
        assert np.abs(X - X.T).max() <= 1e-12 * np.abs(X).max()
    K = loc.K_cons + loc.K_stab
    w = la.eigvalsh(K)
    assert abs(w[0]) <= 1e-10 * w[-1]
    assert w[1] > 0
    assert la.eigvalsh(loc.M_cons + loc.M_stab)[0] > 0


def test_sigma_doubling():
    g = polygon_geometry(star_polygon(np.random.default_rng(1), 7))
    a = local_matrices(g, MaterialParams(), StabilizationKind("tangential", sigma=1.5))
    b = local_matrices(g, MaterialParams(), StabilizationKind("tangential", sigma=3.0))
    assert np.array_equal(a.K_cons, b.K_cons)
    assert np.allclose(b.K_stab, 2 * a.K_stab, rtol=1e-15, atol=0)


def test_half_trace_rule():
    g = polygon_geometry(star_polygon(np.random.default_rng(2), 5))
    loc = local_matrices(g, AIR, StabilizationKind("nodal", "half-trace"))
    assert loc.sigma == pytest.approx(np.trace(loc.K_cons) / 2)


def test_sigma_must_be_positive():
    with pytest.raises(ParameterError):
        StabilizationKind("tangential", sigma=0.0)
    with pytest.raises(ParameterError):
        StabilizationKind("edge")
    with pytest.raises(ParameterError):
        MaterialParams(rho=-1.0)


def test_degenerate_cell_error_names_cell():
    pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [2, 0], [2, 1e-300]], dtype=float)
    m = PolygonalMesh.from_cells(pts, [np.arange(4), np.array([1, 4, 5])])
    with pytest.raises(Exception, match="cell 1"):
        assemble(m)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(3, 10), logrel=st.floats(-9, -1),
       hanging=st.booleans())
def test_patch_test_random_polygons(seed, n, logrel, hanging):
    rng = np.random.default_rng(seed)
    v = star_polygon(rng, n)
    if hanging:
        v = insert_on_edge(v, int(rng.integers(n)), 10.0 ** logrel)
    g = polygon_geometry(v)
    coef = rng.standard_normal(3)
    assert np.abs(projector_pi_nabla(g).T @ p1_values(v, g, coef) - coef).max() <= 1e-12


@pytest.mark.parametrize("stab", STABS)
def test_stabilization_scaling_by_material(stab):
    g = polygon_geometry(star_polygon(np.random.default_rng(5), 6))
    a = local_matrices(g, MaterialParams(1.0, 1.0), stab)
    b = local_matrices(g, MaterialParams(4.0, 3.0), stab)
    assert np.allclose(b.K_cons, a.K_cons * 9 / 4, rtol=1e-14)
    assert np.allclose(b.M_cons, a.M_cons / 4, rtol=1e-14)
    assert np.allclose(b.M_stab, a.M_stab / 4, rtol=1e-14, atol=1e-18)
    # constant sigma: no material factor on the stabilization
    assert np.allclose(b.K_stab, a.K_stab, rtol=1e-14, atol=1e-18)


def test_assembled_2x2_grid_identities():
    m = generate_base_mesh(Domain.rectangle(1, 1), 2)
    s = assemble(m)
    one = np.ones(m.n_vertices)
    assert np.abs(s.A @ one).max() <= 1e-10 * abs(s.A).max()
    assert one @ (s.B @ one) == pytest.approx(1.0, abs=1e-10)
    assert abs(s.A - s.A.T).max() == 0 and abs(s.B - s.B.T).max() == 0


def test_single_triangle_system_equals_p1():
    m = PolygonalMesh.from_cells(TRI, [np.arange(3)])
    s = assemble(m)
    K = np.array([[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])
    M = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24
    assert np.allclose(s.A.toarray(), K, atol=1e-14)
    assert np.allclose(s.B.toarray(), M, atol=1e-15)
    assert np.allclose(s.Ahat.toarray(), K + M, atol=1e-14)


@pytest.mark.parametrize("family", ["T1", "T2", "T3", "T4", "T5"])
def test_global_invariants(family):
    m = generate_family(MeshFamilySpec(family, 4))
    s = assemble(m, WATER, StabilizationKind("tangential", "half-trace"))
    one = np.ones(s.n)
    assert np.abs(s.A @ one).max() <= 1e-10 * abs(s.A).max()
    assert one @ (s.B @ one) == pytest.approx(m.domain.area * 1e-3, rel=1e-10)
    la.cholesky(s.Ahat.toarray())
    la.cholesky(s.B.toarray())
    w = la.eigvalsh(s.A.toarray(), s.B.toarray())
    assert abs(w[0]) <= 1e-10 * w[-1]
    assert w[1] > 1e-6 * w[-1]


@pytest.mark.parametrize("family", ["T1", "T3", "T2"])
def test_short_edge_pencil_is_congruent(family):
    m = generate_family(MeshFamilySpec(family, 4))
    s = assemble(m)
    ref = (s.T.T @ s.Ahat @ s.T).toarray()
    assert np.abs(s.Ahat_y.toarray() - ref).max() <= 1e-12 * np.abs(ref).max()
    assert np.abs((s.T.T @ s.B @ s.T - s.B_y).toarray()).max() <= 1e-15 * abs(s.B).max()
    # T has unit entries and one extra per paired vertex
    assert set(np.unique(s.T.data)) == {1.0}


def test_short_edge_transform_pairs():
    # path 0-1-2-3 with short edges (0,1) and (2,3), long (1,2)
    T, parent = short_edge_transform(4, np.array([0, 1, 2]), np.array([1, 2, 3]), np.array([1e-5, 0.5, 1e-6]))
    assert parent.tolist() == [-1, 0, -1, 2]
    q = T @ np.array([1.0, 0.5, 2.0, -0.25])
    assert q.tolist() == [1.0, 1.5, 2.0, 1.75]


def test_cell_projections_of_linear_field():
    m = generate_family(MeshFamilySpec("T1", 4))
    f = 2.0 - 3.0 * m.points[:, 0] + 0.5 * m.points[:, 1]
    _, grads = cell_projections(m, f)
    assert np.allclose(grads, [-3.0, 0.5], atol=1e-11)
    _, g2 = cell_projections(m, np.column_stack([f, 2 * f]))
    assert np.allclose(g2[..., 1], 2 * grads)


def test_export_matrix_upper_triangle(tmp_path):
    s = assemble(generate_base_mesh(Domain.rectangle(1, 1), 2))
    export_matrix(s.A, tmp_path / "A.txt")
    rows = np.loadtxt(tmp_path / "A.txt")
    assert np.all(rows[:, 0] <= rows[:, 1])
    back = sp.coo_matrix((rows[:, 2], (rows[:, 0].astype(int), rows[:, 1].astype(int))), shape=s.A.shape)
    full = back + sp.triu(back, 1).T
    assert abs(full - s.A).max() == 0


def test_assembly_is_deterministic():
    m = generate_family(MeshFamilySpec("T2", 6))
    a, b = assemble(m), assemble(m)
    assert (a.Ahat != b.Ahat).nnz == 0
    assert (a.Ahat_y != b.Ahat_y).nnz == 0
