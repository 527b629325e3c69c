import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import insert_on_edge, star_polygon
from vemacoustic.errors import GeometryError
from vemacoustic.mesh import polygon_diameter, polygon_geometry, signed_area


def fan_moments(v, centre, h):
    """Degree <= 2 scaled moments by fanning from vertex 0; edge-midpoint rule is exact for quadratics."""
    out = np.zeros((3, 3))
    for i in range(1, len(v) - 1):
        a, b, c = v[0], v[i], v[i + 1]
        area = 0.5 * ((b - a)[0] * (c - a)[1] - (b - a)[1] * (c - a)[0])
        for m in (0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)):
            x, y = (m - centre) / h
            for p in range(3):
                for q in range(3 - p):
                    out[p, q] += area / 3 * x ** p * y ** q
    return out


def test_unit_square():
    g = polygon_geometry([[0, 0], [1, 0], [1, 1], [0, 1]])
    assert g.area == pytest.approx(1.0, abs=1e-15)
    assert g.diameter == pytest.approx(np.sqrt(2), abs=1e-15)
    assert np.allclose(g.centroid, [0.5, 0.5], atol=1e-15)
    assert g.n_vertices == 4
    assert g.perimeter == pytest.approx(4.0)


def test_unit_right_triangle():
    g = polygon_geometry([[0, 0], [1, 0], [0, 1]])
    assert g.area == pytest.approx(0.5, abs=1e-15)
    assert g.diameter == pytest.approx(np.sqrt(2), abs=1e-15)
    assert np.allclose(g.centroid, [1 / 3, 1 / 3], atol=1e-15)


def test_square_moments_closed_form():
    g = polygon_geometry([[0, 0], [1, 0], [1, 1], [0, 1]])
    h = np.sqrt(2)
    # int (x-1/2)^2 over the unit square is 1/12
    assert g.moments[0, 0] == pytest.approx(1.0)
    assert g.moments[1, 0] == pytest.approx(0.0, abs=1e-15)
    assert g.moments[2, 0] == pytest.approx(1 / 12 / h ** 2, rel=1e-14)
    assert g.moments[1, 1] == pytest.approx(0.0, abs=1e-15)
    assert g.moments[0, 2] == pytest.approx(1 / 12 / h ** 2, rel=1e-14)


def test_hanging_node_square_same_moments():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    five = np.array([[0, 0], [1, 0], [1, 0.5], [1, 1], [0, 1]], dtype=float)
    g4, g5 = polygon_geometry(sq), polygon_geometry(five)
    assert g5.n_vertices == 5
    assert g5.area == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(g4.moments, g5.moments, atol=1e-15)


def test_outward_normals_and_lengths():
    g = polygon_geometry([[0, 0], [2, 0], [2, 1], [0, 1]])
    assert np.allclose(g.edge_lengths, [2, 1, 2, 1])
    assert np.allclose(g.normals, [[0, -1], [1, 0], [0, 1], [-1, 0]])


@pytest.mark.parametrize("coords", [
    [[0, 0], [1, 0], [2, 0]],
    [[0, 0], [0, 1], [1, 1], [1, 0]],  # clockwise
])
def test_degenerate_or_cw_raises(coords):
    with pytest.raises(GeometryError):
        polygon_geometry(coords)


def test_signed_area_and_diameter_helpers():
    tri = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
    assert signed_area(tri) == pytest.approx(0.5)
    assert signed_area(tri[::-1]) == pytest.approx(-0.5)
    assert polygon_diameter(tri) == pytest.approx(np.sqrt(2))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(3, 9))
def test_moments_match_fan_quadrature(seed, n):
    v = star_polygon(np.random.default_rng(seed), n)
    g = polygon_geometry(v)
    ref = fan_moments(v, g.centroid, g.diameter)
    mask = np.add.outer(np.arange(3), np.arange(3)) <= 2
    assert np.allclose(g.moments[mask], ref[mask], rtol=0, atol=1e-13 * max(1.0, g.area))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(3, 8), edge=st.integers(0, 20),
       logrel=st.floats(-9.0, -0.05))
def test_insertion_invariance(seed, n, edge, logrel):
    v = star_polygon(np.random.default_rng(seed), n)
    w = insert_on_edge(v, edge % n, 10.0 ** logrel)
    g, gw = polygon_geometry(v), polygon_geometry(w)
    assert gw.n_vertices == n + 1
    assert gw.area == pytest.approx(g.area, rel=1e-13)
    assert np.allclose(gw.centroid, g.centroid, rtol=0, atol=1e-13 * g.diameter)
    assert gw.diameter == g.diameter
    assert np.allclose(gw.moments, g.moments, rtol=0, atol=1e-13 * max(1.0, g.area))
