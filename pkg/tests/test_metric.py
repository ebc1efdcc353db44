import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimetic_cloud.cloud import build_graph, generate_cloud
from mimetic_cloud.errors import CompatibilityError
from mimetic_cloud.geometry import perforated_square, segment_boundary, unit_disk_for_spacing, unit_square
from mimetic_cloud.gmls import Kernel
from mimetic_cloud.metric import (AreaPotentials, CartesianDualMesh, assemble_face_moments,
                                  boundary_face_moments, cartesian_oracle_metric, default_origin,
                                  multiresolution_volumes, oriented_moment, p1_moment_residual,
                                  potential_rhs, solve_area_potentials, uniform_volumes, write_metric_csv)
from mimetic_cloud.mmd import cartesian_operator, meshless_operator, truncation_error

from conftest import make_cloud, make_context


def test_uniform_volumes_example():
    v = uniform_volumes(4, 1.0)
    np.testing.assert_array_equal(v.mu, 0.25)
    assert v.mu.sum() == 1.0


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 50), seed=st.integers(0, 1000))
def test_uniform_volumes_minimize_quadratic(n, seed):
    mu = uniform_volumes(n, 2.0).mu
    d = np.random.default_rng(seed).standard_normal(n)
    d -= d.mean()
    assert np.sum((mu + d) ** 2) >= np.sum(mu ** 2)


def test_mr_single_point_and_symmetry():
    assert multiresolution_volumes(np.array([[0.3, 0.3]]), Kernel(0.5), 1.7).mu[0] == pytest.approx(1.7)
    rng = np.random.default_rng(2)
    half = rng.random((40, 2)) * [0.5, 1.0]
    pts = np.vstack([half, np.column_stack([1 - half[:, 0], half[:, 1]])])
    mu = multiresolution_volumes(pts, Kernel(0.2), 1.0).mu
    np.testing.assert_allclose(mu[:40], mu[40:], rtol=1e-12)


def test_mr_lattice_interior_nearly_equal():
    cloud, dom = make_cloud(20, perturbation=0.0)
    mu = multiresolution_volumes(cloud, Kernel(2.5 / 20), dom.measure).mu
    far = np.all((cloud.points > 0.2) & (cloud.points < 0.8), axis=1)
    assert mu[far].std() / mu[far].mean() < 0.05


@pytest.mark.parametrize("domain", [unit_square(), perforated_square(), unit_disk_for_spacing(1 / 16)])
def test_volume_axioms(domain):
    cloud, _ = make_cloud(16, domain=domain)
    g = build_graph(cloud.points, 2.5 / 16)
    mu = multiresolution_volumes(cloud, Kernel(2.5 / 16), domain.measure, g).mu
    assert np.all(mu > 0)
    assert mu.sum() == pytest.approx(domain.measure, rel=1e-12)
    assert mu.max() / mu.min() < 10


@pytest.mark.parametrize("domain", [unit_square(), perforated_square(), unit_disk_for_spacing(1 / 16)])
def test_potential_compatibility(domain):
    cloud, _ = make_cloud(16, domain=domain)
    mu = uniform_volumes(cloud, domain.measure).mu
    b = potential_rhs(cloud, mu, default_origin(cloud.points, domain.diameter))
    assert np.all(np.abs(b.sum(axis=0)) <= 1e-10 * np.abs(b).sum(axis=0))


def test_incompatible_volumes_named():
    cloud, dom = make_cloud(8)
    g = build_graph(cloud.points, 2.5 / 8)
    mu = uniform_volumes(cloud, 1.1 * dom.measure).mu
    with pytest.raises(CompatibilityError, match="k=0, r=1"):
        solve_area_potentials(cloud, g, mu, default_origin(cloud.points, dom.diameter))


def test_potentials_properties(square_neumann_16):
    ctx = square_neumann_16
    pot = ctx.metric.potentials
    np.testing.assert_allclose(pot.psi.mean(axis=0), 0, atol=1e-12)
    assert np.all(pot.edge_weights > 0)
    np.testing.assert_array_equal(pot.edge_weights[:, 0], 1.0)
    assert all(r.converged for r in pot.reports)


def test_toy_cloud_moment_residual():
    dom = unit_square()
    cloud = generate_cloud(dom, segment_boundary(dom, 1 / 3), 1 / 3, perturbation_fraction=0.0)
    assert cloud.n_interior == 4
    g = build_graph(cloud.points, 0.6)
    mu = uniform_volumes(cloud, 1.0).mu
    origin = default_origin(cloud.points, dom.diameter)
    pot = solve_area_potentials(cloud, g, mu, origin)
    res = p1_moment_residual(cloud, g, mu, assemble_face_moments(pot, g), origin)
    assert np.abs(res).max() <= 1e-9


def test_constant_potential_gives_zero_moments(square_neumann_16):
    ctx = square_neumann_16
    pot = ctx.metric.potentials
    flat = AreaPotentials(np.ones_like(pot.psi), pot.edge_weights)
    np.testing.assert_array_equal(assemble_face_moments(flat, ctx.graph), 0.0)


def test_antisymmetry_bit_exact(square_neumann_16):
    ctx = square_neumann_16
    m, e = ctx.metric.edge_moments, ctx.graph.edges
    for i, j in e[::97]:
        a, b = oriented_moment(m, e, i, j), oriented_moment(m, e, j, i)
        assert np.array_equal(a, -b)


@pytest.mark.parametrize("fixture", ["square_neumann_16", "perforated_neumann_16"])
def test_p1_residual_after_solve(fixture, request):
    ctx = request.getfixturevalue(fixture)
    b = potential_rhs(ctx.cloud, ctx.metric.volumes.mu, ctx.origin)
    res = p1_moment_residual(ctx.cloud, ctx.graph, ctx.metric.volumes.mu, ctx.metric.edge_moments, ctx.origin)
    assert np.abs(res).max() <= 1e-8 * np.abs(b).max()


def test_pipeline_divergence_of_identity(square_neumann_16):
    op = meshless_operator(square_neumann_16)
    div = op.divergence(lambda p: p.copy())
    np.testing.assert_allclose(div[op.interior], 2.0, atol=1e-8)


def test_boundary_moment_examples():
    h = 0.125
    seg = boundary_face_moments(np.array([[h / 2, 0.0]]), np.array([[0.0, -1.0]]), np.array([h]), np.zeros(2))[0]
    assert seg[3] == pytest.approx(-h)  # phi = e2 * 1
    assert seg[0] == 0.0  # phi = e1 * 1
    c = np.array([s.centroid for s in segment_boundary(unit_square(), 0.1)])
    n = np.array([s.normal for s in segment_boundary(unit_square(), 0.1)])
    m = np.full(len(c), 0.1)
    tot = boundary_face_moments(c, n, m, np.zeros(2)).sum(axis=0)
    assert abs(tot[0]) < 1e-14 and abs(tot[3]) < 1e-14


def test_cartesian_mesh_examples():
    mesh, face, piece = cartesian_oracle_metric(8)
    assert mesh.volumes.sum() == 1.0
    interior_vertical = (mesh.face_normals[:, 0] == 1.0) & (mesh.face_lengths == mesh.h)
    assert np.all(face[interior_vertical, 0] == pytest.approx(mesh.h))
    # every face joins two cells and appears once
    assert len({tuple(e) for e in mesh.edges}) == len(mesh.edges)
    assert np.all(mesh.edges[:, 0] < mesh.edges[:, 1])
    assert CartesianDualMesh(4).interior_mask.sum() == 9


def test_oracle_truncation_first_order_on_quadratic():
    # boundary cells carry the O(h) error, so the max norm shows the first-order rate
    Ns = [8, 16, 32]
    errs = [truncation_error(cartesian_operator(N), lambda p: np.column_stack([p[:, 0] ** 2, 0 * p[:, 0]]),
                             lambda p: 2 * p[:, 0]).max for N in Ns]
    rate = -np.polyfit(np.log(Ns), np.log(errs), 1)[0]
    assert 0.8 <= rate <= 1.3


def test_meshless_and_oracle_agree_on_linears():
    ctx = make_context(16, perturbation=0.0)
    ops = [meshless_operator(ctx), cartesian_operator(16)]
    A = np.array([[1.5, -0.3], [0.7, 2.0]])
    for op in ops:
        div = op.divergence(lambda p: p @ A.T + [0.2, -1.0])
        np.testing.assert_allclose(div[op.interior], np.trace(A), atol=1e-8)


def test_metric_csv(tmp_path, square_neumann_16):
    ctx = square_neumann_16
    v, m = write_metric_csv(tmp_path / "metric", ctx.metric, ctx.graph.edges)
    assert len(v.read_text().splitlines()) == ctx.cloud.n_points + 1
    assert len(m.read_text().splitlines()) == len(ctx.graph.edges) + 1
