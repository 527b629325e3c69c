import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import unit_square_mesh
from vemacoustic.mesh import FAMILIES, Domain, MeshFamilySpec, PolygonalMesh, compute_quality, generate_family


def brute_force_ratio(mesh):
    best = np.inf
    for c in mesh.cells:
        v = mesh.points[c]
        shortest = min(np.hypot(*(v[(i + 1) % len(v)] - v[i])) for i in range(len(v)))
        diam = max(np.hypot(*(p - q)) for p, q in itertools.combinations(v, 2))
        best = min(best, shortest / diam)
    return best


def test_unit_square_ratio():
    q = compute_quality(unit_square_mesh())
    assert q.ratio == pytest.approx(1 / np.sqrt(2), rel=1e-15)
    assert q.h == pytest.approx(np.sqrt(2))
    assert q.star_shaped_ok


def test_regular_hexagon_ratio():
    ang = np.arange(6) * np.pi / 3
    pts = np.column_stack([np.cos(ang), np.sin(ang)])
    m = PolygonalMesh.from_cells(pts, [np.arange(6)])
    assert compute_quality(m).ratio == pytest.approx(0.5, rel=1e-14)


def test_non_star_shaped_cell_detected():
    # comb: two teeth whose kernel is empty
    pts = np.array([[0, 0], [5, 0], [5, 3], [4, 3], [4, 0.2], [1, 0.2], [1, 3], [0, 3]], dtype=float)
    pts2 = np.array([[0, 0], [1, 0], [1, 1], [0.5, 0.2], [0, 1]], dtype=float)
    assert not compute_quality(PolygonalMesh.from_cells(pts, [np.arange(8)])).star_shaped_ok
    # an arrowhead is still star-shaped
    q = compute_quality(PolygonalMesh.from_cells(pts2, [np.arange(5)]))
    assert q.star_shaped_ok and q.kernel_radii[0] > 0


def test_report_dict():
    m = unit_square_mesh()
    d = compute_quality(m).as_dict(m)
    assert set(d) >= {"ratio", "h", "n_cells", "n_vertices"}
    assert d["n_cells"] == 1 and d["n_vertices"] == 4


@settings(max_examples=12, deadline=None)
@given(family=st.sampled_from(FAMILIES), N=st.integers(2, 6))
def test_ratio_matches_brute_force(family, N):
    m = generate_family(MeshFamilySpec(family, N))
    q = compute_quality(m)
    assert q.ratio == pytest.approx(brute_force_ratio(m), rel=1e-12)
    assert q.h == pytest.approx(max(m.diameters))
    assert 0 < q.ratio <= 1
    assert q.star_shaped_ok
