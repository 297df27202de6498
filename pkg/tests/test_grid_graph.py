import numpy as np
import pytest
from hypothesis import given, strategies as st

from hjres.grid_graph import (
    GridError,
    build_annulus_grid,
    build_box_grid,
    build_interval_grid,
    collocation_stencil,
    graph_differences,
    graph_gradient,
    read_field,
    stencil_points,
    validate_graph,
    write_field,
)


def test_interval_grid_layout():
    g = build_interval_grid(4)
    np.testing.assert_array_equal(g.coords[:, 0], [0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_array_equal(g.interior, [1, 2, 3])
    np.testing.assert_array_equal(g.boundary, [0, 4])
    # slot 0 is x - h, slot 1 is x + h
    np.testing.assert_array_equal(g.neighbors[2], [1, 3])
    assert g.M == 3 and g.N == 2 and g.K == 2
    assert g.c1 == g.c2 == pytest.approx(1.0)
    validate_graph(g)


@pytest.mark.parametrize("n", [1, 0, 2.5])
def test_interval_grid_rejects_bad_n(n):
    with pytest.raises(GridError):
        build_interval_grid(n)


def test_box_grid_counts():
    g = build_box_grid([0, 0], [1, 1], 0.25)
    assert g.n_nodes == 25 and g.M == 9 and g.N == 16
    assert g.K == 4
    validate_graph(g)


def test_graph_is_immutable():
    g = build_interval_grid(5)
    with pytest.raises(ValueError):
        g.coords[0, 0] = 3.0


def test_differences_slot_convention():
    g = build_interval_grid(4)
    u = g.coords[:, 0] ** 2
    p = graph_differences(u, g)
    h = 0.25
    x = g.coords[g.interior, 0]
    # backward difference and minus the forward difference
    np.testing.assert_allclose(p[:, 0], (x**2 - (x - h) ** 2) / h)
    np.testing.assert_allclose(p[:, 1], (x**2 - (x + h) ** 2) / h)
    np.testing.assert_allclose(graph_gradient(u, 2, g), p[1])


def test_graph_gradient_errors():
    g = build_interval_grid(4)
    with pytest.raises(GridError):
        graph_gradient(np.zeros(5), 0, g)
    with pytest.raises(GridError):
        graph_gradient(np.zeros(3), 1, g)


def test_collocation_stencil():
    s = collocation_stencil([0.3, 0.4], 0.1)
    np.testing.assert_allclose(s.points, [[0.2, 0.4], [0.4, 0.4], [0.3, 0.3], [0.3, 0.5]])
    with pytest.raises(GridError):
        collocation_stencil([0.3], 0.0)
    with pytest.raises(GridError):
        collocation_stencil([0.3, 0.1], 0.1, d=3)
    nb = stencil_points(np.array([[0.3, 0.4]]), 0.1)
    np.testing.assert_allclose(nb[0], s.points)


def test_field_round_trip(tmp_path):
    g = build_box_grid([0, 0], [1, 1], 0.5)
    u = np.linspace(-1, 1, g.n_nodes) / 3
    write_field(tmp_path / "f.txt", g, u)
    idx, coords, interior, vals = read_field(tmp_path / "f.txt")
    np.testing.assert_array_equal(idx, np.arange(g.n_nodes))
    np.testing.assert_array_equal(coords, g.coords)
    np.testing.assert_array_equal(interior, g.is_interior())
    np.testing.assert_array_equal(vals, u)


def test_annulus_tags_and_partition():
    g, tags = build_annulus_grid(0.5, np.sqrt(2), 0.1)
    validate_graph(g)
    r2 = np.sum(g.coords**2, axis=1)
    assert np.all((r2[g.interior] > 0.25 + 1e-9) & (r2[g.interior] < 2 - 1e-9))
    np.testing.assert_array_equal(tags, np.where(r2[g.boundary] <= 0.25 + 1e-9, 0.0, 1.0))
    # the origin is a boundary node tagged 0
    origin = np.flatnonzero(np.all(np.abs(g.coords) < 1e-12, axis=1))[0]
    assert tags[np.searchsorted(g.boundary, origin)] == 0.0


def test_annulus_cut_cells_lengths():
    h = 0.1
    g, _ = build_annulus_grid(0.5, np.sqrt(2), h, cut_cells=True)
    validate_graph(g)
    I = g.interior
    nb = g.neighbors[I]
    inner = g.is_interior()[nb]
    assert np.all(g.edge_len[I][inner] == pytest.approx(h))
    cut = g.edge_len[I][~inner]
    assert np.all((cut >= 1e-2 * h) & (cut <= h + 1e-15))
    # the cut point lies on one of the two circles
    j, slot = np.nonzero(~inner)
    axis = slot // 2
    sgn = 2 * (slot % 2) - 1
    pts = g.coords[I[j]].copy()
    pts[np.arange(len(j)), axis] += sgn * g.edge_len[I[j], slot]
    rad = np.linalg.norm(pts, axis=1)
    unclipped = g.edge_len[I[j], slot] > 1e-2 * h
    dist = np.minimum(np.abs(rad - 0.5), np.abs(rad - np.sqrt(2)))
    assert np.all(dist[unclipped] < 1e-12)


def test_annulus_rejects_bad_geometry():
    with pytest.raises(GridError):
        build_annulus_grid(1.0, 0.5, 0.1)
    with pytest.raises(GridError):
        build_annulus_grid(0.5, 0.6, 0.1)


@given(n=st.integers(2, 200))
def test_interval_interior_count(n):
    g = build_interval_grid(n)
    assert g.M == n - 1 and g.N == 2
    assert np.isclose(g.h, 1.0 / n)


@given(h=st.sampled_from([0.5, 0.25, 0.2, 0.125, 0.1]), d=st.integers(1, 3))
def test_box_grid_symmetric(h, d):
    g = build_box_grid([0] * d, [1] * d, h)
    validate_graph(g)
    m = round(1 / h) + 1
    assert g.n_nodes == m**d and g.M == (m - 2) ** d
