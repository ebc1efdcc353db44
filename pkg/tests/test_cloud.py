import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimetic_cloud.cloud import (brute_force_edges, build_graph, fill_distance, generate_cloud,
                                 radius_neighbors, separation_distance, write_cloud_csv)
from mimetic_cloud.errors import ConfigurationError, DisconnectedGraphError
from mimetic_cloud.geometry import perforated_square, segment_boundary, unit_square


def _cloud(N, pf=0.2, seed=0, domain=None):
    dom = domain or unit_square()
    return generate_cloud(dom, segment_boundary(dom, 1.0 / N), 1.0 / N, perturbation_fraction=pf, seed=seed)


def test_unperturbed_quarter_lattice():
    cl = _cloud(4, pf=0.0)
    assert cl.n_interior == 9
    np.testing.assert_allclose(np.unique(cl.interior[:, 0]), [0.25, 0.5, 0.75])
    np.testing.assert_allclose(np.unique(cl.interior[:, 1]), [0.25, 0.5, 0.75])


def test_seeded_clouds_bit_identical():
    a, b = _cloud(16, seed=7), _cloud(16, seed=7)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, _cloud(16, seed=8).points)


def test_boundary_particle_count_and_positions():
    cl = _cloud(16)
    assert cl.n_boundary == 64
    c, _, _ = cl.segment_data()
    np.testing.assert_array_equal(cl.boundary, c)


def test_perturbation_bounded_and_inside():
    dom = perforated_square()
    cl = _cloud(20, domain=dom)
    assert np.all(dom.contains(cl.interior))
    ref = _cloud(20, pf=0.0, domain=dom)
    assert np.max(np.abs(cl.interior - ref.interior)) <= 0.2 / 20 + 1e-15


def test_bad_perturbation_and_empty_interior():
    with pytest.raises(ConfigurationError):
        _cloud(8, pf=0.5)
    dom = unit_square()
    with pytest.raises(ConfigurationError):
        generate_cloud(dom, segment_boundary(dom, 1.0), 1.0)


def test_separation_is_half_min_distance(rng):
    pts = rng.random((200, 2))
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    d[np.diag_indices(200)] = np.inf
    assert separation_distance(pts) == pytest.approx(0.5 * d.min(), rel=1e-14)


def test_quality_metrics():
    cl = _cloud(16)
    assert cl.separation <= cl.fill_distance
    assert cl.quasi_uniformity == pytest.approx(cl.fill_distance / cl.separation)


def test_fill_distance_single_point_and_lattice():
    dom = unit_square()
    est = fill_distance(np.array([[0.5, 0.5]]), dom, h_target=0.25)
    assert est == pytest.approx(np.sqrt(2) / 2, abs=0.25 / 4)
    pts = np.array([[(i + 0.5) / 8, (j + 0.5) / 8] for i in range(8) for j in range(8)])
    assert fill_distance(pts, dom, h_target=1 / 8) == pytest.approx(np.sqrt(2) / 2 / 8, abs=1 / 32)


def test_fill_distance_monotone(rng):
    dom = unit_square()
    pts = rng.random((30, 2))
    before = fill_distance(pts, dom, h_target=0.1)
    after = fill_distance(np.vstack([pts, rng.random((1, 2))]), dom, h_target=0.1)
    assert after <= before + 1e-15


def test_graph_collinear():
    g = build_graph(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), 1.5)
    assert sorted(map(tuple, g.edges)) == [(0, 1), (1, 2)]


def test_graph_disconnected():
    with pytest.raises(DisconnectedGraphError, match="radius"):
        build_graph(np.array([[0.0, 0.0], [1.0, 0.0]]), 0.5)


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 10_000), radius=st.floats(0.05, 0.2))
def test_binning_matches_brute_force(seed, radius):
    pts = np.random.default_rng(seed).random((500, 2))
    g = build_graph(pts, radius, check_connected=False)
    fast = {tuple(e) for e in g.edges}
    slow = {tuple(e) for e in brute_force_edges(pts, radius)}
    assert fast == slow


def test_graph_symmetry_and_strict_radius():
    cl = _cloud(16)
    g = build_graph(cl.points, 2.5 / 16)
    A = g.adjacency_matrix()
    assert (A != A.T).nnz == 0
    d = np.linalg.norm(cl.points[g.edges[:, 0]] - cl.points[g.edges[:, 1]], axis=1)
    assert np.all(d < 2.5 / 16)
    for i in (0, 10, 100):
        for j in g.neighbors(i):
            assert i in g.neighbors(j)


def test_radius_neighbors_contract(rng):
    pts = rng.random((50, 2))
    q, j, d = radius_neighbors(pts[:5], pts, 0.2)
    np.testing.assert_allclose(d, np.linalg.norm(pts[q] - pts[j], axis=1))
    assert np.all(d < 0.2)


def test_cloud_csv(tmp_path):
    cl = _cloud(4, pf=0.0)
    path = tmp_path / "cloud.csv"
    write_cloud_csv(cl, path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[:5] == ["id", "x", "y", "kind", "segment_id"]
    assert len(lines) == 1 + cl.n_points
    assert sum("boundary" in l for l in lines[1:]) == cl.n_boundary
