import numpy as np
import pytest
import scipy.sparse as sp

from vemacoustic.eigensolve import (
    SPARSE,
    EigenSolverConfig,
    recover_frequencies,
    residual_check,
    solve,
)
from vemacoustic.errors import ConsistencyError, ConvergenceError, MatrixError, ParameterError
from vemacoustic.mesh import Domain, MeshFamilySpec, generate_base_mesh, generate_family
from vemacoustic.vem import WATER, MaterialParams, StabilizationKind, assemble

K_TRI = np.array([[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])
M_TRI = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24
HALF = StabilizationKind("tangential", "half-trace")


def cubic_pencil_roots(K, M):
    """Roots of det(K - mu M) from a cubic interpolated at four points."""
    mus = np.array([-1.0, 0.0, 1.0, 2.0]) * 10
    dets = [np.linalg.det(K - m * M) for m in mus]
    return np.sort(np.roots(np.polyfit(mus, dets, 3)).real)


def test_identity_pencil():
    B = sp.csr_matrix(np.diag([1.0, 2.0, 3.0, 4.0]))
    s = solve(B, EigenSolverConfig(k=2), B=B)
    assert np.allclose(s.lambdas, 1.0)
    assert np.allclose(s.omegas, 0.0)


def test_single_triangle_pencil():
    s = solve(sp.csr_matrix(K_TRI + M_TRI), EigenSolverConfig(k=2), B=sp.csr_matrix(M_TRI))
    mu = cubic_pencil_roots(K_TRI, M_TRI)
    assert np.allclose(s.lambdas, 1 + mu[:2], rtol=0, atol=1e-10)
    assert mu[0] == pytest.approx(0.0, abs=1e-9)


def test_2x2_grid_constant_mode():
    s = assemble(generate_base_mesh(Domain.rectangle(1, 1), 2))
    sp_ = solve(s, EigenSolverConfig(k=3))
    assert sp_.lambdas[0] == pytest.approx(1.0, abs=1e-10)
    x = sp_.vectors[:, 0]
    assert np.allclose(x, x.mean(), atol=1e-10)


@pytest.mark.parametrize("family", ["T1", "T2", "T3", "T4", "T5"])
def test_dense_sparse_agree(family):
    s = assemble(generate_family(MeshFamilySpec(family, 6)))
    assert s.n <= 2000
    d = solve(s, EigenSolverConfig(k=6))
    r = solve(s, EigenSolverConfig(k=6, mode=SPARSE))
    assert d.method == "dense" and r.method == "sparse"
    assert np.allclose(d.lambdas, r.lambdas, rtol=1e-8, atol=0)
    for spec in (d, r):
        G = spec.vectors.T @ (s.B @ spec.vectors)
        assert np.abs(G - np.eye(6)).max() <= 1e-8
        assert spec.lambdas[0] >= 1 - 1e-8
        assert np.all(np.diff(spec.lambdas) >= 0)


def test_monotone_refinement_T1():
    lams = [solve(assemble(generate_family(MeshFamilySpec("T1", N))), EigenSolverConfig(k=6)).lambdas
            for N in (8, 16, 32)]
    assert np.all(lams[1][1:] < lams[0][1:]) and np.all(lams[2][1:] < lams[1][1:])


def test_c_scaling_and_rho_invariance():
    m = generate_family(MeshFamilySpec("T1", 6))
    base = solve(assemble(m, MaterialParams(1.0, 1.0), HALF), EigenSolverConfig(k=6)).lambdas - 1
    c2 = solve(assemble(m, MaterialParams(1.0, 2.0), HALF), EigenSolverConfig(k=6)).lambdas - 1
    rho = solve(assemble(m, MaterialParams(1000.0, 1.0), HALF), EigenSolverConfig(k=6)).lambdas - 1
    assert np.allclose(c2[1:], 4 * base[1:], rtol=1e-9, atol=0)
    assert np.allclose(rho[1:], base[1:], rtol=1e-9, atol=0)


def test_non_spd_B_rejected():
    A = sp.identity(4, format="csr")
    B = sp.csr_matrix(np.diag([1.0, -1.0, 1.0, 1.0]))
    with pytest.raises(MatrixError):
        solve(A, EigenSolverConfig(k=1), B=B)
    with pytest.raises(MatrixError):
        solve(A, EigenSolverConfig(k=1), B=sp.csr_matrix(np.triu(np.ones((4, 4)))))


def test_k_must_be_below_n():
    s = assemble(generate_base_mesh(Domain.rectangle(1, 1), 2))
    with pytest.raises(ParameterError):
        solve(s, EigenSolverConfig(k=9))
    with pytest.raises(ParameterError):
        EigenSolverConfig(k=0)


def test_convergence_error_carries_residuals():
    s = assemble(generate_family(MeshFamilySpec("T1", 4)))
    with pytest.raises(ConvergenceError) as exc:
        solve(s, EigenSolverConfig(k=4, tol=1e-30))
    assert exc.value.residuals is not None and len(exc.value.residuals) == 4


def test_recover_frequencies_examples():
    assert recover_frequencies([1.0], "omega")[0] == 0.0
    assert recover_frequencies([1.0], "nu")[0] == 0.0
    assert recover_frequencies([1 + np.pi ** 2], "omega")[0] == pytest.approx(np.pi)
    assert recover_frequencies([1 + np.pi ** 2], "nu")[0] == pytest.approx(1.0)
    assert recover_frequencies([1 + np.pi ** 2 / 1.21], "nu")[0] == pytest.approx(0.826446, abs=1e-6)
    # tiny negatives clamp; real violations raise
    assert recover_frequencies([1 - 1e-9], "omega")[0] == 0.0
    with pytest.raises(ConsistencyError):
        recover_frequencies([1 - 1e-3], "omega")
    assert recover_frequencies([1 - 1e-3], "omega", strict=False)[0] == 0.0
    with pytest.raises(ParameterError):
        recover_frequencies([2.0], "hz")


def test_residual_check_exact_and_perturbed():
    A = K_TRI + M_TRI
    w, V = np.linalg.eig(np.linalg.solve(M_TRI, A))
    i = np.argsort(w.real)
    w, V = w.real[i], V.real[:, i]
    assert residual_check((A, M_TRI), w, V).max() <= 1e-14
    e1 = np.array([1.0, 0, 0])
    eps = np.array([1e-6, 2e-6, 4e-6])
    res = [residual_check((A, M_TRI), w[1:2], V[:, 1] + de * e1)[0] for de in eps]
    assert res[1] / res[0] == pytest.approx(2, rel=1e-3)
    assert res[2] / res[1] == pytest.approx(2, rel=1e-3)


@pytest.mark.parametrize("family", ["T1", "T3", "T5"])
def test_constant_vector_residual(family):
    s = assemble(generate_family(MeshFamilySpec(family, 8)), WATER, HALF)
    one = np.ones(s.n) / np.sqrt(np.ones(s.n) @ (s.B @ np.ones(s.n)))
    r = residual_check(s, [1.0], one)[0]
    assert r <= 1e-10 * abs(s.Ahat).max()


def test_spectrum_invariants_small_edges():
    s = assemble(generate_family(MeshFamilySpec("T3", 32)), MaterialParams(), StabilizationKind())
    spec = solve(s, EigenSolverConfig(k=4))
    assert spec.method == "sparse"
    assert abs(spec.lambdas[0] - 1) <= 1e-8
    assert np.all(spec.residuals / (abs(s.Ahat).max() * (1 + spec.lambdas)) <= 1e-9)


@pytest.mark.parametrize("family", ["T1", "T2", "T3", "T4", "T5"])
def test_constant_vector_residual_absolute_unit_material(family):
    s = assemble(generate_family(MeshFamilySpec(family, 8)))
    assert residual_check(s, [1.0], np.ones(s.n))[0] <= 1e-10
