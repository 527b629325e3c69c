import numpy as np
import pytest

from vemacoustic.mesh import Domain, PolygonalMesh

# acceptance results, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def unit_square_mesh():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return PolygonalMesh.from_cells(pts, [np.arange(4)], Domain.rectangle(1.0, 1.0))


def star_polygon(rng, n, radius=1.0):
    """Random polygon star-shaped w.r.t. the origin, CCW."""
    while True:
        ang = np.sort(rng.uniform(0.0, 2 * np.pi, n))
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
        if gaps.max() < 0.9 * np.pi and gaps.min() > 1e-2:
            break
    r = radius * rng.uniform(0.3, 1.0, n)
    return np.column_stack([r * np.cos(ang), r * np.sin(ang)]) + rng.uniform(-2, 2, 2)


def insert_on_edge(coords, edge, rel):
    """Insert a collinear vertex at fraction ``rel`` along ``edge``."""
    a, b = coords[edge], coords[(edge + 1) % len(coords)]
    return np.insert(coords, edge + 1, a + rel * (b - a), axis=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
